//! Finite-difference probes of the smoothness of the distance function.

use nalgebra::Vector2;

use crate::error::{Error, Result};
use crate::field::{DistanceField, FootResult, Locator, PointClass};
use crate::metric::Metric;
use crate::oracle::segment_length;

/// Minimal foot of `x`, using `near` as continuation seed.
pub fn nearest_foot<M: Metric<2>>(
    locator: &Locator<'_, M>,
    x: &Vector2<f64>,
    near: &[FootResult],
) -> Result<FootResult> {
    let seeds: Vec<_> = near.iter().map(Locator::<M>::seed_from).collect();
    let feet = locator.locate_with(x, &seeds)?;
    Ok(feet[0])
}

fn distance<M: Metric<2>>(
    locator: &Locator<'_, M>,
    x: &Vector2<f64>,
    near: &[FootResult],
) -> Result<f64> {
    Ok(nearest_foot(locator, x, near)?.d)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheck {
    pub x: Vector2<f64>,
    pub d: f64,
    pub fd_gradient: Vector2<f64>,
    /// `∇_v φ(X; ξ̇)` at the arrival velocity.
    pub legendre: Vector2<f64>,
    pub gradient_error: f64,
    /// Central difference of `d` along the arrival velocity.
    pub directional: f64,
    /// `None` when the second difference is flat to noise level.
    pub hessian_ratio: Option<f64>,
}

/// Central second difference of `d` along `dir` at step `delta`.
fn second_difference<M: Metric<2>>(
    locator: &Locator<'_, M>,
    x: &Vector2<f64>,
    dir: &Vector2<f64>,
    delta: f64,
    centre: &FootResult,
) -> Result<f64> {
    let near = [*centre];
    let p = distance(locator, &(x + dir * delta), &near)?;
    let m = distance(locator, &(x - dir * delta), &near)?;
    Ok((p - 2.0 * centre.d + m) / (delta * delta))
}

/// Noise level of a computed distance, set by the Newton tolerance.
const DISTANCE_NOISE: f64 = 1e-12;

/// Gradient, directional derivative and Hessian-refinement checks at a
/// regular point. `delta` is the gradient step; `hess_delta` the coarsest
/// Hessian step (halved twice), capped at a sixteenth of the remaining
/// distance to the focal point of the foot's ray since higher derivatives of
/// `d` blow up there.
pub fn gradient_check<M: Metric<2>>(
    locator: &Locator<'_, M>,
    x: &Vector2<f64>,
    delta: f64,
    hess_delta: f64,
) -> Result<GradientCheck> {
    let feet = locator.locate(x)?;
    let foot = feet[0];
    let near = [foot];
    let mut g = Vector2::zeros();
    for k in 0..2 {
        let mut e = Vector2::zeros();
        e[k] = delta;
        g[k] = (distance(locator, &(x + e), &near)? - distance(locator, &(x - e), &near)?)
            / (2.0 * delta);
    }
    let legendre = locator.metric.jet(x, &foot.arrival)?.d_v;
    let v = foot.arrival;
    let directional = (distance(locator, &(x + v * delta), &near)?
        - distance(locator, &(x - v * delta), &near)?)
        / (2.0 * delta);
    let t = v.normalize();
    let hess_delta = match locator.fan.conjugate_at(foot.foot_u) {
        Some(s) => hess_delta.min((s - foot.d) / 16.0),
        None => hess_delta,
    };
    // The leading error of a second difference is proportional to a fourth
    // derivative of d, which can vanish along any single direction; the ratio
    // is taken along the direction where that term is largest.
    let c = std::f64::consts::FRAC_1_SQRT_2;
    let directions = [
        Vector2::new(-t.y, t.x),
        Vector2::new(1.0, 0.0),
        Vector2::new(0.0, 1.0),
        Vector2::new(c, c),
        Vector2::new(c, -c),
    ];
    let mut best: Option<(f64, f64)> = None;
    if hess_delta > 0.0 {
        for dir in &directions {
            let d2: Vec<f64> = [hess_delta, hess_delta / 2.0, hess_delta / 4.0]
                .iter()
                .map(|&h| second_difference(locator, x, dir, h, &foot))
                .collect::<Result<_>>()?;
            let (num, den) = (d2[0] - d2[1], d2[1] - d2[2]);
            if best.is_none_or(|b| den.abs() > b.1.abs()) {
                best = Some((num, den));
            }
        }
    }
    let noise = 4.0 * DISTANCE_NOISE / (hess_delta / 4.0).powi(2);
    let hessian_ratio = best.and_then(|(num, den)| (den.abs() > 30.0 * noise).then(|| num / den));
    Ok(GradientCheck {
        x: *x,
        d: foot.d,
        fd_gradient: g,
        legendre,
        gradient_error: (g - legendre).amax(),
        directional,
        hessian_ratio,
    })
}

/// Norm of the jump between one-sided FD gradients at `a` and `b`, two points
/// on either side of the singular set.
pub fn gradient_jump<M: Metric<2>>(
    locator: &Locator<'_, M>,
    a: &Vector2<f64>,
    b: &Vector2<f64>,
    delta: f64,
) -> Result<f64> {
    let grad = |x: &Vector2<f64>| -> Result<Vector2<f64>> {
        let foot = nearest_foot(locator, x, &[])?;
        let near = [foot];
        let mut g = Vector2::zeros();
        for k in 0..2 {
            let mut e = Vector2::zeros();
            e[k] = delta;
            g[k] = (distance(locator, &(x + e), &near)? - distance(locator, &(x - e), &near)?)
                / (2.0 * delta);
        }
        Ok(g)
    };
    Ok((grad(a)? - grad(b)?).norm())
}

/// Status of points along one normal ray: whether each sample at arclength
/// `s` is owned by the ray's own foot as its unique minimiser.
#[derive(Debug, Clone, PartialEq)]
pub struct RayOwnership {
    pub u: f64,
    pub samples: Vec<(f64, bool)>,
}

impl RayOwnership {
    /// True when owned samples form a prefix (no interleaving).
    pub fn is_monotone(&self) -> bool {
        let first_lost = self
            .samples
            .iter()
            .position(|s| !s.1)
            .unwrap_or(self.samples.len());
        self.samples[first_lost..].iter().all(|s| !s.1)
    }

    /// Arclength of the last owned sample.
    pub fn owned_until(&self) -> f64 {
        self.samples
            .iter()
            .take_while(|s| s.1)
            .last()
            .map_or(0.0, |s| s.0)
    }
}

/// Samples the normal ray from boundary parameter `u` at arclengths
/// `s_k = k·ds` (k ≥ 1) while it stays inside, recording ownership.
pub fn ray_ownership<M: Metric<2>>(
    locator: &Locator<'_, M>,
    u: f64,
    ds: f64,
    s_max: f64,
) -> Result<RayOwnership> {
    let traj = crate::geodesic::shoot_normal(
        locator.metric,
        locator.curve,
        &[u],
        s_max,
        locator.opts.ode_step,
        None,
    )?;
    let mut samples = Vec::new();
    let mut s = ds;
    while s <= s_max + 1e-12 {
        let x = traj.state_at(locator.metric, s)?.xi;
        if !locator.curve.contains(&x) || locator.fan.boundary_distance(&x, 1e-9).is_some() {
            break;
        }
        let owned = match locator.locate(&x) {
            Ok(feet) => {
                let best = feet[0];
                let unique = feet
                    .get(1)
                    .is_none_or(|f| f.d - best.d > locator.opts.cut_tol);
                let own = locator.curve.param_diff(best.foot_u, u).abs() < 1e-6
                    && (best.d - s).abs() < 1e-6;
                let focal_ok = locator.fan.conjugate_at(u).is_none_or(|c| s < c);
                unique && own && focal_ok
            }
            Err(_) => false,
        };
        samples.push((s, owned));
        s += ds;
    }
    Ok(RayOwnership { u, samples })
}

/// Largest `|d(x) − d(σ(x))|` over points whose mirror image under `mirror`
/// (a map of grid indices) is also classified.
pub fn symmetry_defect(
    field: &DistanceField,
    mirror: impl Fn(usize, usize) -> (usize, usize),
) -> f64 {
    let g = field.grid;
    let mut worst: f64 = 0.0;
    for j in 0..g.ny {
        for i in 0..g.nx {
            let (mi, mj) = mirror(i, j);
            if mi >= g.nx || mj >= g.ny {
                continue;
            }
            if let (Some(a), Some(b)) = (field.at(i, j).distance(), field.at(mi, mj).distance()) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    worst
}

/// Largest violation of `d(y) ≤ d(x) + φ(y − x)` over lattice neighbours
/// (8-neighbourhood, both orders), with segment lengths by Simpson's rule.
pub fn lipschitz_violation<M: Metric<2>>(field: &DistanceField, metric: &M) -> Result<f64> {
    let g = field.grid;
    let mut worst: f64 = 0.0;
    for j in 0..g.ny {
        for i in 0..g.nx {
            let Some(da) = field.at(i, j).distance() else {
                continue;
            };
            for (di, dj) in [(1i64, 0i64), (0, 1), (1, 1), (1, -1)] {
                let (ni, nj) = (i as i64 + di, j as i64 + dj);
                if ni < 0 || nj < 0 || ni as usize >= g.nx || nj as usize >= g.ny {
                    continue;
                }
                let b = field.at(ni as usize, nj as usize);
                let Some(db) = b.distance() else { continue };
                let a = field.at(i, j);
                let ab = segment_length(metric, &a.x, &b.x)?;
                let ba = segment_length(metric, &b.x, &a.x)?;
                worst = worst.max(db - da - ab).max(da - db - ba);
            }
        }
    }
    Ok(worst)
}

/// First-order estimate of the Euclidean distance from a located point to the
/// cut locus: the length gap to the runner-up foot over the jump in `∇d`
/// between the two branches. `None` for a single foot.
pub fn cut_distance_estimate<M: Metric<2>>(
    metric: &M,
    x: &Vector2<f64>,
    feet: &[FootResult],
) -> Result<Option<f64>> {
    let [a, b, ..] = feet else { return Ok(None) };
    let ga = metric.jet(x, &a.arrival)?.d_v;
    let gb = metric.jet(x, &b.arrival)?.d_v;
    let slope = (ga - gb).norm();
    if slope == 0.0 {
        return Ok(None);
    }
    Ok(Some((b.d - a.d) / slope))
}

/// Points of `field` classified REGULAR at Chebyshev grid distance at least
/// `margin` from any CUT, BEYOND_CONJUGATE, UNRESOLVED or band point, and
/// whose estimated distance to the cut locus is at least `margin` cells.
pub fn regular_with_margin<M: Metric<2>>(
    field: &DistanceField,
    metric: &M,
    margin: usize,
) -> Result<Vec<Vector2<f64>>> {
    let g = field.grid;
    let bad = |p: PointClass| !matches!(p, PointClass::Regular);
    let reach = margin as f64 * g.h;
    let mut out = Vec::new();
    for j in margin..g.ny.saturating_sub(margin) {
        for i in margin..g.nx.saturating_sub(margin) {
            let p = field.at(i, j);
            if bad(p.class) {
                continue;
            }
            let clear = (j - margin..=j + margin)
                .all(|jj| (i - margin..=i + margin).all(|ii| !bad(field.at(ii, jj).class)));
            if clear && cut_distance_estimate(metric, &p.x, &p.feet)?.is_none_or(|r| r >= reach) {
                out.push(p.x);
            }
        }
    }
    Ok(out)
}

/// `|det M| / scale` at the minimal foot of a regular point.
pub fn jacobian_margin<M: Metric<2>>(locator: &Locator<'_, M>, x: &Vector2<f64>) -> Result<f64> {
    let foot = nearest_foot(locator, x, &[])?;
    let (det, scale) = locator.jacobian_at_foot(&foot)?;
    if scale == 0.0 {
        return Err(Error::Invalid("degenerate Jacobian scale".into()));
    }
    Ok(det.abs() / scale)
}
