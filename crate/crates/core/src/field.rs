//! Distance to the boundary of a planar domain: foot-point inversion, grid
//! fields and classification of the singular set.
//!
//! A point `X` is located in two stages. A fan of normal geodesics from
//! uniformly spaced boundary samples, indexed by a spatial hash, proposes
//! candidate feet where rays pass close to `X`. Each candidate is then
//! refined by Newton's method on the backward-shooting system in the
//! unknowns `(L, σ', u)`: the geodesic arriving at `X` with velocity
//! `(σ', τ(σ'))` in a frame adapted to the candidate's arrival direction,
//! traced back a length `L`, must end on the boundary at `γ(u)` with velocity
//! `V(u)`.

use nalgebra::{Matrix3, Vector2, Vector3};
use rayon::prelude::*;

use crate::boundary::{BoundaryChart, Curve};
use crate::error::{Error, Result};
use crate::geodesic::{
    integrate_endpoint, rk4_step, shoot_normal, step_count, tau_normalize_in, GeodesicState,
};
use crate::jacobi::{conjugate_distance, jacobi_bundle_fd, JacobiOptions};
use crate::linalg::basis_with_last;
use crate::metric::Metric;
use crate::normal::solve_normal_at;
use crate::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PointClass {
    Regular,
    Cut,
    BeyondConjugate,
    BoundaryBand,
    Outside,
    /// Every Newton solve failed.
    Unresolved,
}

impl PointClass {
    pub fn label(self) -> &'static str {
        match self {
            PointClass::Regular => "REGULAR",
            PointClass::Cut => "CUT",
            PointClass::BeyondConjugate => "BEYOND_CONJUGATE",
            PointClass::BoundaryBand => "BOUNDARY_BAND",
            PointClass::Outside => "OUTSIDE",
            PointClass::Unresolved => "UNRESOLVED",
        }
    }

    /// Fixed RGB palette for classification images.
    pub fn color(self) -> [u8; 3] {
        match self {
            PointClass::Regular => [255, 255, 255],
            PointClass::Cut => [255, 0, 0],
            PointClass::BeyondConjugate => [0, 0, 255],
            PointClass::BoundaryBand => [128, 128, 128],
            PointClass::Outside => [0, 0, 0],
            PointClass::Unresolved => [255, 0, 255],
        }
    }
}

/// One converged solution of the inversion system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FootResult {
    /// Finsler distance along the geodesic (its arclength).
    pub d: f64,
    /// Boundary parameter of the foot.
    pub foot_u: f64,
    pub foot: Vector2<f64>,
    /// Unit-speed velocity of the geodesic on arrival at `X`.
    pub arrival: Vector2<f64>,
    pub newton_iters: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldOptions {
    /// Number of fan rays.
    pub fan_rays: usize,
    /// Integration step of the fan rays.
    pub fan_step: f64,
    /// Integration step of the backward shots in Newton.
    pub ode_step: f64,
    /// Boundary samples carrying a cached conjugate distance.
    pub conjugate_samples: usize,
    pub newton_tol: f64,
    pub max_newton: usize,
    /// Finite-difference step of the Newton Jacobian.
    pub fd_step: f64,
    pub max_seeds: usize,
    /// Feet with `|Δd|` below this tie for the minimum.
    pub cut_tol: f64,
    /// Feet closer than this in boundary parameter are the same foot.
    pub foot_separation: f64,
}

impl Default for FieldOptions {
    fn default() -> Self {
        FieldOptions {
            fan_rays: 1024,
            fan_step: 1e-2,
            ode_step: 1e-3,
            conjugate_samples: 256,
            newton_tol: 1e-11,
            max_newton: 30,
            fd_step: 1e-5,
            max_seeds: 8,
            cut_tol: 1e-7,
            foot_separation: 1e-4,
        }
    }
}

// Uniform-grid spatial hash of tagged segments.
#[derive(Debug, Clone)]
struct SegmentHash {
    lo: Vector2<f64>,
    cell: f64,
    nx: usize,
    ny: usize,
    cells: Vec<Vec<u32>>,
    segments: Vec<(Vector2<f64>, Vector2<f64>, u32, u32)>,
}

impl SegmentHash {
    fn new(lo: Vector2<f64>, hi: Vector2<f64>, cell: f64) -> Self {
        let nx = (((hi.x - lo.x) / cell).ceil() as usize).max(1);
        let ny = (((hi.y - lo.y) / cell).ceil() as usize).max(1);
        SegmentHash {
            lo,
            cell,
            nx,
            ny,
            cells: vec![Vec::new(); nx * ny],
            segments: Vec::new(),
        }
    }

    fn cell_of(&self, p: &Vector2<f64>) -> (i64, i64) {
        (
            ((p.x - self.lo.x) / self.cell).floor() as i64,
            ((p.y - self.lo.y) / self.cell).floor() as i64,
        )
    }

    fn insert(&mut self, a: Vector2<f64>, b: Vector2<f64>, tag: u32, k: u32) {
        let id = self.segments.len() as u32;
        self.segments.push((a, b, tag, k));
        let (ia, ja) = self.cell_of(&a);
        let (ib, jb) = self.cell_of(&b);
        for i in ia.min(ib)..=ia.max(ib) {
            for j in ja.min(jb)..=ja.max(jb) {
                if i >= 0 && j >= 0 && (i as usize) < self.nx && (j as usize) < self.ny {
                    let c = &mut self.cells[j as usize * self.nx + i as usize];
                    if c.last() != Some(&id) {
                        c.push(id);
                    }
                }
            }
        }
    }

    /// Visits each segment within `radius` cells-worth of `p` (possibly more
    /// than once) with `(segment id, distance, projection parameter)`.
    fn visit(&self, p: &Vector2<f64>, radius: f64, mut f: impl FnMut(u32, f64, f64)) {
        let (ci, cj) = self.cell_of(p);
        let r = (radius / self.cell).ceil() as i64;
        for j in (cj - r).max(0)..=(cj + r).min(self.ny as i64 - 1) {
            for i in (ci - r).max(0)..=(ci + r).min(self.nx as i64 - 1) {
                for &id in &self.cells[j as usize * self.nx + i as usize] {
                    let (a, b, _, _) = &self.segments[id as usize];
                    let ab = b - a;
                    let len2 = ab.norm_squared();
                    let w = if len2 > 0.0 {
                        ((p - a).dot(&ab) / len2).clamp(0.0, 1.0)
                    } else {
                        0.0
                    };
                    let dist = (a + ab * w - p).norm();
                    if dist <= radius {
                        f(id, dist, w);
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
struct Ray {
    u: f64,
    step: f64,
    states: Vec<GeodesicState<2>>,
}

/// A candidate foot proposed by the fan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Seed {
    pub u: f64,
    pub length: f64,
    pub arrival: Vector2<f64>,
}

/// Immutable per-boundary data shared by all grid points: the fan of normal
/// geodesics, its spatial index, a boundary polyline index and conjugate
/// distances at uniformly spaced boundary samples.
#[derive(Debug, Clone)]
pub struct FanCache {
    rays: Vec<Ray>,
    hash: SegmentHash,
    boundary: SegmentHash,
    conjugate: Vec<Option<f64>>,
    periodic: bool,
    u_range: (f64, f64),
    lo: Vector2<f64>,
    hi: Vector2<f64>,
}

fn curve_bounds(curve: &Curve) -> (Vector2<f64>, Vector2<f64>) {
    let mut lo = Vector2::repeat(f64::INFINITY);
    let mut hi = Vector2::repeat(f64::NEG_INFINITY);
    for k in 0..2048 {
        let p = curve.point(k as f64 / 2048.0);
        lo = lo.inf(&p);
        hi = hi.sup(&p);
    }
    let pad = 0.02 * (hi - lo).amax();
    (lo - Vector2::repeat(pad), hi + Vector2::repeat(pad))
}

impl FanCache {
    /// Fan over the whole of a closed boundary.
    pub fn build<M: Metric<2>>(metric: &M, curve: &Curve, opts: &FieldOptions) -> Result<Self> {
        if !curve.is_closed() {
            return Err(Error::Invalid(
                "an open boundary needs a parameter window and a box".into(),
            ));
        }
        let (lo, hi) = curve_bounds(curve);
        Self::build_impl(metric, curve, (0.0, 1.0), true, lo, hi, opts)
    }

    /// Fan over the parameter window `u_range` of any boundary, with rays
    /// clipped to the box `[lo, hi]`.
    pub fn build_window<M: Metric<2>>(
        metric: &M,
        curve: &Curve,
        u_range: (f64, f64),
        lo: Vector2<f64>,
        hi: Vector2<f64>,
        opts: &FieldOptions,
    ) -> Result<Self> {
        if !(u_range.1 > u_range.0) || !(hi.x > lo.x && hi.y > lo.y) {
            return Err(Error::Invalid("empty fan window".into()));
        }
        Self::build_impl(metric, curve, u_range, false, lo, hi, opts)
    }

    fn param(periodic: bool, u_range: (f64, f64), j: usize, n: usize) -> f64 {
        let denom = if periodic { n } else { n.max(2) - 1 };
        u_range.0 + (u_range.1 - u_range.0) * j as f64 / denom as f64
    }

    fn build_impl<M: Metric<2>>(
        metric: &M,
        curve: &Curve,
        u_range: (f64, f64),
        periodic: bool,
        lo: Vector2<f64>,
        hi: Vector2<f64>,
        opts: &FieldOptions,
    ) -> Result<Self> {
        let diameter = (hi - lo).norm();
        let inside = |p: &Vector2<f64>| {
            curve.contains(p) && p.x >= lo.x && p.y >= lo.y && p.x <= hi.x && p.y <= hi.y
        };
        // generous cap on the arclength of a ray before it leaves the domain
        let s_cap = 20.0 * diameter;
        let rays: Vec<Ray> = (0..opts.fan_rays)
            .into_par_iter()
            .map(|j| {
                let u = Self::param(periodic, u_range, j, opts.fan_rays);
                let bp = curve.boundary_point(&[u])?;
                let v = solve_normal_at(metric, &bp, None)?.v;
                let mut states = vec![GeodesicState::new(bp.y, v)];
                let mut s = states[0];
                let max_steps = (s_cap / opts.fan_step).ceil() as usize;
                for _ in 0..max_steps {
                    s = rk4_step(metric, &s, opts.fan_step)?;
                    if !inside(&s.xi) {
                        break;
                    }
                    states.push(s);
                }
                Ok(Ray {
                    u,
                    step: opts.fan_step,
                    states,
                })
            })
            .collect::<Result<_>>()?;

        let nb = 8192;
        let polyline: Vec<Vector2<f64>> = (0..=nb)
            .map(|k| curve.point(u_range.0 + (u_range.1 - u_range.0) * k as f64 / nb as f64))
            .collect();
        let perimeter: f64 = polyline.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
        let cell = (2.0 * perimeter / opts.fan_rays as f64)
            .max(opts.fan_step)
            .max(diameter / 512.0);
        let mut hash = SegmentHash::new(lo, hi, cell);
        for (j, ray) in rays.iter().enumerate() {
            for k in 1..ray.states.len() {
                hash.insert(
                    ray.states[k - 1].xi,
                    ray.states[k].xi,
                    j as u32,
                    (k - 1) as u32,
                );
            }
        }
        let mut boundary = SegmentHash::new(lo, hi, diameter / 256.0);
        for (k, w) in polyline.windows(2).enumerate() {
            boundary.insert(w[0], w[1], k as u32, 0);
        }

        let nc = opts.conjugate_samples;
        let conjugate = (0..nc)
            .into_par_iter()
            .map(|i| {
                let u = Self::param(periodic, u_range, i, nc);
                let nearest = rays
                    .iter()
                    .min_by(|a, b| {
                        curve
                            .param_diff(a.u, u)
                            .abs()
                            .total_cmp(&curve.param_diff(b.u, u).abs())
                    })
                    .expect("non-empty fan");
                let reach = nearest.step * nearest.states.len() as f64 + 0.05 * diameter;
                conjugate_distance(metric, curve, &[u], reach)
            })
            .collect::<Result<_>>()?;

        Ok(FanCache {
            rays,
            hash,
            boundary,
            conjugate,
            periodic,
            u_range,
            lo,
            hi,
        })
    }

    /// Parameter spacing between neighbouring rays.
    pub fn spacing(&self) -> f64 {
        (self.u_range.1 - self.u_range.0) / self.rays.len() as f64
    }

    /// Bounding box of the domain (with a small margin).
    pub fn bounds(&self) -> (Vector2<f64>, Vector2<f64>) {
        (self.lo, self.hi)
    }

    /// Conjugate distance at boundary parameter `u`, interpolated between
    /// cached samples; `None` when no conjugate point lies inside the domain.
    pub fn conjugate_at(&self, u: f64) -> Option<f64> {
        let n = self.conjugate.len();
        let (a, b) = self.u_range;
        let (i, j, w) = if self.periodic {
            let x = ((u - a) / (b - a)).rem_euclid(1.0) * n as f64;
            let i = (x.floor() as usize) % n;
            (i, (i + 1) % n, x - x.floor())
        } else {
            let x = ((u - a) / (b - a)).clamp(0.0, 1.0) * (n - 1) as f64;
            let i = (x.floor() as usize).min(n - 2);
            (i, i + 1, x - i as f64)
        };
        match (self.conjugate[i], self.conjugate[j]) {
            (Some(a), Some(b)) => Some((1.0 - w) * a + w * b),
            _ => None,
        }
    }

    pub fn min_conjugate_distance(&self) -> Option<f64> {
        self.conjugate.iter().flatten().copied().reduce(f64::min)
    }

    /// Euclidean distance to the boundary if below `radius`.
    pub fn boundary_distance(&self, x: &Vector2<f64>, radius: f64) -> Option<f64> {
        let mut best: Option<f64> = None;
        self.boundary.visit(x, radius, |_, d, _| {
            best = Some(best.map_or(d, |b| b.min(d)));
        });
        best
    }

    /// Candidate feet: local minima over the ray index of the distance from
    /// `x` to each ray, keeping those whose arclength is near the smallest.
    pub fn seeds(&self, x: &Vector2<f64>, max_seeds: usize) -> Vec<Seed> {
        let n = self.rays.len();
        let mut radius = self.hash.cell;
        let limit = (self.hi - self.lo).norm();
        loop {
            // per ray: (distance, segment id, projection)
            let mut best: Vec<Option<(f64, u32, f64)>> = vec![None; n];
            self.hash.visit(x, radius, |id, d, w| {
                let ray = self.hash.segments[id as usize].2 as usize;
                if best[ray].is_none_or(|b| d < b.0) {
                    best[ray] = Some((d, id, w));
                }
            });
            let mut cands: Vec<(f64, Seed)> = Vec::new();
            for j in 0..n {
                let Some((d, id, w)) = best[j] else { continue };
                let neighbour =
                    |k: Option<usize>| k.and_then(|k| best[k]).map_or(f64::INFINITY, |b| b.0);
                let (l, r) = if self.periodic {
                    (Some((j + n - 1) % n), Some((j + 1) % n))
                } else {
                    (j.checked_sub(1), (j + 1 < n).then_some(j + 1))
                };
                let (left, right) = (neighbour(l), neighbour(r));
                if !(d < left && d <= right) {
                    continue;
                }
                let (_, _, ray_idx, k) = self.hash.segments[id as usize];
                let ray = &self.rays[ray_idx as usize];
                let k = k as usize;
                let a = &ray.states[k];
                let b = &ray.states[k + 1];
                cands.push((
                    d,
                    Seed {
                        u: ray.u,
                        length: ray.step * (k as f64 + w),
                        arrival: a.v * (1.0 - w) + b.v * w,
                    },
                ));
            }
            if !cands.is_empty() {
                let s_min = cands
                    .iter()
                    .map(|c| c.1.length)
                    .fold(f64::INFINITY, f64::min);
                let slack = 0.25 * s_min + 4.0 * radius;
                cands.retain(|c| c.1.length <= s_min + slack);
                cands.sort_by(|a, b| {
                    a.1.length
                        .total_cmp(&b.1.length)
                        .then(a.1.u.total_cmp(&b.1.u))
                });
                // spread the kept seeds when there are many ties (e.g. a focal point)
                if cands.len() > max_seeds {
                    let stride = cands.len() as f64 / max_seeds as f64;
                    let mut by_u = cands.clone();
                    by_u.sort_by(|a, b| a.1.u.total_cmp(&b.1.u));
                    cands = (0..max_seeds)
                        .map(|i| by_u[(i as f64 * stride) as usize])
                        .collect();
                }
                return cands.into_iter().map(|c| c.1).collect();
            }
            radius *= 2.0;
            if radius > limit {
                return Vec::new();
            }
        }
    }
}

/// Shared, immutable context for locating feet of one metric and boundary.
pub struct Locator<'a, M: Metric<2>> {
    pub metric: &'a M,
    pub curve: &'a Curve,
    pub fan: FanCache,
    pub opts: FieldOptions,
}

struct NewtonState {
    p: Vector3<f64>,
    basis: Matrix<2>,
    n_steps: usize,
}

impl<'a, M: Metric<2>> Locator<'a, M> {
    pub fn new(metric: &'a M, curve: &'a Curve, opts: FieldOptions) -> Result<Self> {
        let fan = FanCache::build(metric, curve, &opts)?;
        Ok(Locator {
            metric,
            curve,
            fan,
            opts,
        })
    }

    /// Locator over a prebuilt fan (e.g. a windowed fan of an open boundary).
    pub fn with_fan(metric: &'a M, curve: &'a Curve, fan: FanCache, opts: FieldOptions) -> Self {
        Locator {
            metric,
            curve,
            fan,
            opts,
        }
    }

    // (position residual, tangential velocity residual), and the arrival velocity
    fn residual(
        &self,
        x: &Vector2<f64>,
        st: &NewtonState,
        p: &Vector3<f64>,
    ) -> Result<(Vector3<f64>, Vector2<f64>)> {
        let (len, sigma, u) = (p[0], p[1], p[2]);
        if !(len > 0.0) {
            return Err(Error::Invalid("non-positive length".into()));
        }
        let tau = tau_normalize_in(self.metric, x, &st.basis, &[sigma])?;
        let w = st.basis * Vector2::new(sigma, tau);
        let end = integrate_endpoint(
            self.metric,
            GeodesicState::new(*x, w),
            -len / st.n_steps as f64,
            st.n_steps,
        )?;
        let bp = self.curve.boundary_point(&[u])?;
        let guess = Some(end.v);
        let v = solve_normal_at(self.metric, &bp, guess)?.v;
        let t_hat = bp.tangents[0].normalize();
        let dy = end.xi - bp.y;
        Ok((Vector3::new(dy.x, dy.y, t_hat.dot(&(end.v - v))), w))
    }

    /// Newton refinement of one seed.
    pub fn refine(&self, x: &Vector2<f64>, seed: &Seed) -> Result<FootResult> {
        let basis = basis_with_last(&seed.arrival);
        // a seed at the ray origin (points hugging the boundary) starts just inside
        let st = NewtonState {
            p: Vector3::new(seed.length.max(0.5 * self.opts.ode_step), 0.0, seed.u),
            basis,
            n_steps: step_count(seed.length.max(self.opts.ode_step), self.opts.ode_step),
        };
        let mut p = st.p;
        let (mut f, mut w) = self.residual(x, &st, &p)?;
        let mut iters = 0;
        let h = self.opts.fd_step;
        while f.amax() > self.opts.newton_tol {
            if iters >= self.opts.max_newton {
                return Err(Error::NoConvergence {
                    what: "foot inversion",
                    iterations: iters,
                    residual: f.amax(),
                });
            }
            iters += 1;
            let mut jac = Matrix3::zeros();
            for k in 0..3 {
                let mut pp = p;
                pp[k] += h;
                let col = if k == 0 && p[0] <= h {
                    // lengths below the step: one-sided
                    (self.residual(x, &st, &pp)?.0 - f) / h
                } else {
                    let mut pm = p;
                    pm[k] -= h;
                    (self.residual(x, &st, &pp)?.0 - self.residual(x, &st, &pm)?.0) / (2.0 * h)
                };
                jac.set_column(k, &col);
            }
            let svd = jac.svd(true, true);
            let smax = svd.singular_values.max();
            let step = svd
                .solve(&f, 1e-10 * smax)
                .map_err(|e| Error::Invalid(e.to_string()))?;
            let mut lambda = 1.0;
            let current = f.amax();
            loop {
                let trial = p - lambda * step;
                match self.residual(x, &st, &trial) {
                    Ok((ft, wt)) if ft.amax() < current => {
                        p = trial;
                        f = ft;
                        w = wt;
                        break;
                    }
                    _ => {
                        lambda *= 0.5;
                        if lambda < 1.0 / 64.0 {
                            return Err(Error::NoConvergence {
                                what: "foot inversion line search",
                                iterations: iters,
                                residual: current,
                            });
                        }
                    }
                }
            }
        }
        let u = self.curve.wrap(p[2]);
        Ok(FootResult {
            d: p[0],
            foot_u: u,
            foot: self.curve.point(u),
            arrival: w,
            newton_iters: iters,
            residual: f.amax(),
        })
    }

    fn dedup(&self, mut feet: Vec<FootResult>) -> Vec<FootResult> {
        feet.sort_by(|a, b| a.d.total_cmp(&b.d).then(a.foot_u.total_cmp(&b.foot_u)));
        let mut out: Vec<FootResult> = Vec::new();
        for f in feet {
            let dup = out.iter_mut().find(|g| {
                self.curve.param_diff(f.foot_u, g.foot_u).abs() <= self.opts.foot_separation
                    && (f.d - g.d).abs() <= self.opts.cut_tol
            });
            match dup {
                // same foot reached from several seeds: keep the cheapest solve
                Some(g) if f.newton_iters < g.newton_iters => *g = f,
                Some(_) => {}
                None => out.push(f),
            }
        }
        out
    }

    /// All distinct converged feet for `x`, sorted by distance. `extra` seeds
    /// (e.g. from a neighbouring point) are tried first and displace fan
    /// candidates with nearby parameters. Fails only if nothing converged.
    pub fn locate_with(&self, x: &Vector2<f64>, extra: &[Seed]) -> Result<Vec<FootResult>> {
        let mut seeds: Vec<Seed> = extra.to_vec();
        for s in self.fan.seeds(x, self.opts.max_seeds) {
            if !extra
                .iter()
                .any(|e| self.curve.param_diff(e.u, s.u).abs() < 2.0 * self.fan.spacing())
            {
                seeds.push(s);
            }
        }
        if seeds.is_empty() {
            return Err(Error::NoCandidate);
        }
        let mut feet = Vec::new();
        let mut last_err = None;
        for s in &seeds {
            match self.refine(x, s) {
                Ok(f) => feet.push(f),
                Err(e) => last_err = Some(e),
            }
        }
        if feet.is_empty() {
            return Err(last_err.unwrap_or(Error::NoCandidate));
        }
        let mut feet = self.dedup(feet);
        // critical points past their conjugate point are not local minimisers
        let d_min = feet[0].d;
        feet.retain(|f| {
            f.d - d_min <= self.opts.cut_tol
                || self.fan.conjugate_at(f.foot_u).is_none_or(|c| f.d <= c)
        });
        Ok(feet)
    }

    pub fn locate(&self, x: &Vector2<f64>) -> Result<Vec<FootResult>> {
        self.locate_with(x, &[])
    }

    /// Classification of a located point from its feet.
    pub fn classify_feet(&self, feet: &[FootResult]) -> PointClass {
        let Some(best) = feet.first() else {
            return PointClass::Unresolved;
        };
        let ties = feet
            .iter()
            .filter(|f| f.d - best.d <= self.opts.cut_tol)
            .count();
        if ties >= 2 {
            return PointClass::Cut;
        }
        match self.fan.conjugate_at(best.foot_u) {
            Some(s_star) if best.d > s_star + 1e-6 => PointClass::BeyondConjugate,
            _ => PointClass::Regular,
        }
    }

    /// Shoots forward from the foot for length `d` and returns the miss
    /// distance from `x`.
    pub fn reconstruction_error(&self, x: &Vector2<f64>, foot: &FootResult) -> Result<f64> {
        let traj = shoot_normal(
            self.metric,
            self.curve,
            &[foot.foot_u],
            foot.d,
            self.opts.ode_step,
            None,
        )?;
        Ok((traj.last().xi - x).norm())
    }

    /// `|det M|` of the boundary-exponential Jacobian at the foot and arclength
    /// `d`, with the product of its column norms for scale.
    pub fn jacobian_at_foot(&self, foot: &FootResult) -> Result<(f64, f64)> {
        let opts = JacobiOptions {
            step: self.opts.ode_step.max(foot.d / 2000.0),
            ..JacobiOptions::default()
        };
        let b = jacobi_bundle_fd(self.metric, self.curve, &[foot.foot_u], foot.d, opts)?;
        let k = b.base.len() - 1;
        let m = b.jacobian(k);
        Ok((b.det(k), m.column(0).norm() * m.column(1).norm()))
    }

    /// Seed reproducing a converged foot, for continuation.
    pub fn seed_from(foot: &FootResult) -> Seed {
        Seed {
            u: foot.foot_u,
            length: foot.d,
            arrival: foot.arrival,
        }
    }
}

/// Axis-aligned lattice `x_i = x0 + i h`, `y_j = y0 + j h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub x0: f64,
    pub y0: f64,
    pub h: f64,
    pub nx: usize,
    pub ny: usize,
}

impl GridSpec {
    /// Lattice covering `[xmin, xmax] × [ymin, ymax]`.
    pub fn from_box(bx: [f64; 4], h: f64) -> Result<Self> {
        let [xmin, xmax, ymin, ymax] = bx;
        if !(h > 0.0) || !(xmax > xmin) || !(ymax > ymin) {
            return Err(Error::Invalid(format!("bad grid box {bx:?} / spacing {h}")));
        }
        Ok(GridSpec {
            x0: xmin,
            y0: ymin,
            h,
            nx: ((xmax - xmin) / h + 1e-9).floor() as usize + 1,
            ny: ((ymax - ymin) / h + 1e-9).floor() as usize + 1,
        })
    }

    pub fn point(&self, i: usize, j: usize) -> Vector2<f64> {
        Vector2::new(self.x0 + self.h * i as f64, self.y0 + self.h * j as f64)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldPoint {
    pub x: Vector2<f64>,
    pub class: PointClass,
    pub feet: Vec<FootResult>,
}

impl FieldPoint {
    pub fn distance(&self) -> Option<f64> {
        self.feet.first().map(|f| f.d)
    }
}

/// Distance field on a lattice, row-major with `x` fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField {
    pub grid: GridSpec,
    pub points: Vec<FieldPoint>,
    pub band: f64,
    pub min_conjugate_distance: Option<f64>,
}

impl DistanceField {
    pub fn at(&self, i: usize, j: usize) -> &FieldPoint {
        &self.points[j * self.grid.nx + i]
    }

    pub fn count(&self, class: PointClass) -> usize {
        self.points.iter().filter(|p| p.class == class).count()
    }

    /// Fraction of classified interior points (not band, not outside) that
    /// are unresolved.
    pub fn unresolved_fraction(&self) -> f64 {
        let interior = self
            .points
            .iter()
            .filter(|p| !matches!(p.class, PointClass::Outside | PointClass::BoundaryBand))
            .count();
        if interior == 0 {
            0.0
        } else {
            self.count(PointClass::Unresolved) as f64 / interior as f64
        }
    }

    pub fn low_confidence(&self) -> bool {
        self.unresolved_fraction() > 0.01
    }
}

/// Computes the field over `grid`. Rows are processed in parallel; within a
/// row each point seeds its right neighbour, so the result does not depend on
/// the number of threads.
pub fn compute_field<M: Metric<2>>(locator: &Locator<'_, M>, grid: GridSpec) -> DistanceField {
    let band = 2.0 * grid.h;
    let rows: Vec<Vec<FieldPoint>> = (0..grid.ny)
        .into_par_iter()
        .map(|j| {
            let mut row = Vec::with_capacity(grid.nx);
            let mut carry: Vec<Seed> = Vec::new();
            for i in 0..grid.nx {
                let x = grid.point(i, j);
                let point = if !locator.curve.contains(&x) {
                    carry.clear();
                    FieldPoint {
                        x,
                        class: PointClass::Outside,
                        feet: Vec::new(),
                    }
                } else if locator.fan.boundary_distance(&x, band).is_some() {
                    carry.clear();
                    FieldPoint {
                        x,
                        class: PointClass::BoundaryBand,
                        feet: Vec::new(),
                    }
                } else {
                    match locator.locate_with(&x, &carry) {
                        Ok(feet) => {
                            carry = feet.iter().map(Locator::<M>::seed_from).collect();
                            FieldPoint {
                                x,
                                class: locator.classify_feet(&feet),
                                feet,
                            }
                        }
                        Err(_) => {
                            carry.clear();
                            FieldPoint {
                                x,
                                class: PointClass::Unresolved,
                                feet: Vec::new(),
                            }
                        }
                    }
                };
                row.push(point);
            }
            row
        })
        .collect();
    DistanceField {
        grid,
        points: rows.into_iter().flatten().collect(),
        band,
        min_conjugate_distance: locator.fan.min_conjugate_distance(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::MetricSpec;

    #[test]
    fn hash_finds_nearby_segments() {
        let mut h = SegmentHash::new(Vector2::zeros(), Vector2::new(1.0, 1.0), 0.1);
        h.insert(Vector2::new(0.1, 0.1), Vector2::new(0.15, 0.1), 0, 0);
        h.insert(Vector2::new(0.9, 0.9), Vector2::new(0.9, 0.95), 1, 0);
        let mut hits = Vec::new();
        h.visit(&Vector2::new(0.12, 0.13), 0.05, |id, d, _| {
            hits.push((id, d))
        });
        assert_eq!(hits.len(), 1);
        assert!((hits[0].1 - 0.03).abs() < 1e-12);
    }

    #[test]
    fn disk_point_has_radial_foot() {
        let e = MetricSpec::euclidean(2).unwrap();
        let c = Curve::circle(Vector2::zeros(), 1.0).unwrap();
        let opts = FieldOptions {
            fan_rays: 256,
            conjugate_samples: 16,
            ..FieldOptions::default()
        };
        let loc = Locator::new(&e, &c, opts).unwrap();
        let x = Vector2::new(0.3, 0.4);
        let feet = loc.locate(&x).unwrap();
        assert!((feet[0].d - 0.5).abs() < 1e-10);
        assert!((feet[0].foot - x.normalize()).norm() < 1e-9);
        assert_eq!(loc.classify_feet(&feet), PointClass::Regular);
    }
}
