//! Boundary Jacobi fields, the Jacobian of the boundary-exponential map
//! `(x', s) ↦ ξ(x', s)` and conjugate distances.
//!
//! The primary route is finite differencing of neighbouring normal shots; the
//! linearised geodesic equation ([`jacobi_ode`]) is an independent cross-check
//! whose coefficients are themselves finite differences of the geodesic
//! right-hand side.

use crate::boundary::BoundaryChart;
use crate::error::{Error, Result};
use crate::geodesic::{geodesic_rhs, rk4_step, shoot_normal, GeodesicState, Trajectory};
use crate::linalg::{condition_number, determinant, smallest_singular, to_dmatrix};
use crate::metric::Metric;
use crate::{Matrix, Vector};

/// Sampled Jacobi field `(ζ, ζ̇)` on the sample times of its base trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobiField<const N: usize> {
    pub zeta: Vec<Vector<N>>,
    pub dzeta: Vec<Vector<N>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JacobiOptions {
    /// Chart offset of the neighbouring shots.
    pub h: f64,
    /// Integrator step.
    pub step: f64,
}

impl Default for JacobiOptions {
    fn default() -> Self {
        JacobiOptions {
            h: 1e-3,
            step: 1e-3,
        }
    }
}

/// Normal geodesic with its `n − 1` boundary Jacobi fields.
#[derive(Debug, Clone)]
pub struct JacobiBundle<const N: usize> {
    pub base: Trajectory<N>,
    pub fields: Vec<JacobiField<N>>,
    /// Boundary orientation; `orientation · det M(0) > 0`.
    pub orientation: f64,
    h: f64,
    // per chart direction: shots at x' + h, x' − h, x' + h/2, x' − h/2
    shots: Vec<[Trajectory<N>; 4]>,
}

fn richardson<const N: usize>(
    p: &Vector<N>,
    m: &Vector<N>,
    p2: &Vector<N>,
    m2: &Vector<N>,
    h: f64,
) -> Vector<N> {
    let d1 = (p - m) / (2.0 * h);
    let d2 = (p2 - m2) / h;
    (4.0 * d2 - d1) / 3.0
}

/// Jacobi bundle by central differences of normal shots at `x' ± h e_β`
/// and `x' ± h/2 e_β`, Richardson-extrapolated.
pub fn jacobi_bundle_fd<const N: usize, M: Metric<N>, B: BoundaryChart<N>>(
    metric: &M,
    chart: &B,
    x: &[f64],
    s_max: f64,
    opts: JacobiOptions,
) -> Result<JacobiBundle<N>> {
    if x.len() != N - 1 {
        return Err(Error::Dimension {
            expected: N - 1,
            found: x.len(),
        });
    }
    let orientation = chart.boundary_point(x)?.orientation;
    let base = shoot_normal(metric, chart, x, s_max, opts.step, None)?;
    let h = opts.h;
    let mut shots = Vec::with_capacity(N - 1);
    let mut fields = Vec::with_capacity(N - 1);
    for b in 0..N - 1 {
        let shot = |d: f64| {
            let mut xs = x.to_vec();
            xs[b] += d;
            shoot_normal(metric, chart, &xs, s_max, opts.step, None)
        };
        let set = [shot(h)?, shot(-h)?, shot(0.5 * h)?, shot(-0.5 * h)?];
        let k = base.len();
        let combine = |sel: fn(&GeodesicState<N>) -> Vector<N>| -> Vec<Vector<N>> {
            (0..k)
                .map(|i| {
                    richardson(
                        &sel(&set[0].states[i]),
                        &sel(&set[1].states[i]),
                        &sel(&set[2].states[i]),
                        &sel(&set[3].states[i]),
                        h,
                    )
                })
                .collect()
        };
        fields.push(JacobiField {
            zeta: combine(|s| s.xi),
            dzeta: combine(|s| s.v),
        });
        shots.push(set);
    }
    Ok(JacobiBundle {
        base,
        fields,
        orientation,
        h,
        shots,
    })
}

impl<const N: usize> JacobiBundle<N> {
    fn assemble(zetas: &[Vector<N>], xi_dot: &Vector<N>) -> Matrix<N> {
        let mut m = Matrix::<N>::zeros();
        for (b, z) in zetas.iter().enumerate() {
            m.set_column(b, z);
        }
        m.set_column(N - 1, xi_dot);
        m
    }

    /// `M(s_k) = [ζ_1 … ζ_{n−1}, ξ̇]` at sample `k`.
    pub fn jacobian(&self, k: usize) -> Matrix<N> {
        let z: Vec<_> = self.fields.iter().map(|f| f.zeta[k]).collect();
        Self::assemble(&z, &self.base.states[k].v)
    }

    /// Orientation-normalised `det M` at sample `k`.
    pub fn det(&self, k: usize) -> f64 {
        self.orientation * determinant(&self.jacobian(k))
    }

    /// Base state and Jacobi fields at an arbitrary arclength, by one RK4
    /// sub-step of every shot from the preceding sample.
    pub fn fields_at<M: Metric<N>>(
        &self,
        metric: &M,
        s: f64,
    ) -> Result<(GeodesicState<N>, Vec<(Vector<N>, Vector<N>)>)> {
        let base = self.base.state_at(metric, s)?;
        let mut out = Vec::with_capacity(N - 1);
        for set in &self.shots {
            let st: Vec<GeodesicState<N>> = set
                .iter()
                .map(|t| t.state_at(metric, s))
                .collect::<Result<_>>()?;
            out.push((
                richardson(&st[0].xi, &st[1].xi, &st[2].xi, &st[3].xi, self.h),
                richardson(&st[0].v, &st[1].v, &st[2].v, &st[3].v, self.h),
            ));
        }
        Ok((base, out))
    }

    pub fn jacobian_at<M: Metric<N>>(&self, metric: &M, s: f64) -> Result<Matrix<N>> {
        let (base, f) = self.fields_at(metric, s)?;
        let z: Vec<_> = f.iter().map(|p| p.0).collect();
        Ok(Self::assemble(&z, &base.v))
    }

    pub fn det_at<M: Metric<N>>(&self, metric: &M, s: f64) -> Result<f64> {
        Ok(self.orientation * determinant(&self.jacobian_at(metric, s)?))
    }
}

/// Result of a `det M` sign scan.
#[derive(Debug, Clone, PartialEq)]
pub struct ConjugateScan {
    /// First zero of `det M` in `(0, s_max]`, if any.
    pub s_star: Option<f64>,
    /// `(s, det M(s))` on the scan grid.
    pub grid: Vec<(f64, f64)>,
    /// Largest condition number of `M` on the grid before `s_star`; large
    /// values flag near-tangency of the boundary columns.
    pub max_condition: f64,
}

pub const SCAN_POINTS: usize = 200;
pub const BISECTION_TOL: f64 = 1e-6;

/// Sign scan of `det M` on a uniform grid over the bundle's length, then
/// bisection of the first sign change.
pub fn scan_conjugate<const N: usize, M: Metric<N>>(
    metric: &M,
    bundle: &JacobiBundle<N>,
    points: usize,
) -> Result<ConjugateScan> {
    let s_max = bundle.base.final_time();
    let mut grid = Vec::with_capacity(points + 1);
    let mut max_condition: f64 = 0.0;
    let mut prev = (0.0, bundle.det(0));
    grid.push(prev);
    let mut bracket = None;
    for i in 1..=points {
        let s = s_max * i as f64 / points as f64;
        let jac = bundle.jacobian_at(metric, s)?;
        let det = bundle.orientation * determinant(&jac);
        grid.push((s, det));
        if det <= 0.0 {
            bracket = Some((prev.0, s));
            break;
        }
        max_condition = max_condition.max(condition_number(&to_dmatrix(&jac)));
        prev = (s, det);
    }
    let s_star = match bracket {
        None => touching_zero(metric, bundle, &grid)?,
        Some((mut lo, mut hi)) => {
            while hi - lo > BISECTION_TOL {
                let mid = 0.5 * (lo + hi);
                if bundle.det_at(metric, mid)? > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            // linear interpolation inside the final bracket
            let dl = bundle.det_at(metric, lo)?;
            let dh = bundle.det_at(metric, hi)?;
            Some(if dl > dh {
                lo + (hi - lo) * dl / (dl - dh)
            } else {
                0.5 * (lo + hi)
            })
        }
    };
    Ok(ConjugateScan {
        s_star,
        grid,
        max_condition,
    })
}

// A zero of even multiplicity (e.g. an umbilic boundary point in 3-D) shows
// no sign change; look for a grid minimum of det M that refines to zero.
fn touching_zero<const N: usize, M: Metric<N>>(
    metric: &M,
    bundle: &JacobiBundle<N>,
    grid: &[(f64, f64)],
) -> Result<Option<f64>> {
    let d0 = grid[0].1.abs();
    for k in 1..grid.len().saturating_sub(1) {
        let (lo, mid, hi) = (grid[k - 1], grid[k], grid[k + 1]);
        if !(mid.1 <= lo.1 && mid.1 <= hi.1 && mid.1 < 0.05 * d0) {
            continue;
        }
        // golden-section minimisation of det on [lo, hi]
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let (mut a, mut b) = (lo.0, hi.0);
        let mut c = b - g * (b - a);
        let mut d = a + g * (b - a);
        let mut fc = bundle.det_at(metric, c)?;
        let mut fd = bundle.det_at(metric, d)?;
        while b - a > BISECTION_TOL * 1e-2 {
            if fc < fd {
                b = d;
                d = c;
                fd = fc;
                c = b - g * (b - a);
                fc = bundle.det_at(metric, c)?;
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + g * (b - a);
                fd = bundle.det_at(metric, d)?;
            }
        }
        let s = 0.5 * (a + b);
        if bundle.det_at(metric, s)? <= 1e-9 * d0 {
            return Ok(Some(s));
        }
    }
    Ok(None)
}

/// First conjugate distance along the normal geodesic from `x'`, searched on
/// `(0, s_max]` with default options.
pub fn conjugate_distance<const N: usize, M: Metric<N>, B: BoundaryChart<N>>(
    metric: &M,
    chart: &B,
    x: &[f64],
    s_max: f64,
) -> Result<Option<f64>> {
    let bundle = jacobi_bundle_fd(metric, chart, x, s_max, JacobiOptions::default())?;
    Ok(scan_conjugate(metric, &bundle, SCAN_POINTS)?.s_star)
}

/// The Jacobi field in the kernel of `M(s*)`, sampled on `[0, s*]`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelField<const N: usize> {
    /// Kernel coefficients: boundary columns first, then the `ξ̇` column.
    pub coefficients: Vec<f64>,
    pub times: Vec<f64>,
    pub zeta: Vec<Vector<N>>,
    pub dzeta: Vec<Vector<N>>,
    /// Smallest singular value of `M(s*)`.
    pub sigma_min: f64,
}

/// Builds `Σ c_β ζ_β + c_n ξ̇` from the kernel vector `c` of `M(s*)`; it is a
/// Jacobi field vanishing at `s*`. The sign is fixed by `c_1 > 0`.
pub fn kernel_field<const N: usize, M: Metric<N>>(
    metric: &M,
    bundle: &JacobiBundle<N>,
    s_star: f64,
) -> Result<KernelField<N>> {
    let jac = bundle.jacobian_at(metric, s_star)?;
    let (mut c, sigma_min) = smallest_singular(&to_dmatrix(&jac));
    if c[0] < 0.0 {
        c = -c;
    }
    let combine =
        |base: &GeodesicState<N>, f: &[(Vector<N>, Vector<N>)]| -> Result<(Vector<N>, Vector<N>)> {
            let acc = geodesic_rhs(metric, base)?.1;
            let mut z = c[N - 1] * base.v;
            let mut dz = c[N - 1] * acc;
            for (b, (zb, dzb)) in f.iter().enumerate() {
                z += c[b] * zb;
                dz += c[b] * dzb;
            }
            Ok((z, dz))
        };
    let mut times = Vec::new();
    let mut zeta = Vec::new();
    let mut dzeta = Vec::new();
    for (k, t) in bundle.base.times.iter().enumerate() {
        if *t >= s_star {
            break;
        }
        let f: Vec<_> = bundle
            .fields
            .iter()
            .map(|fl| (fl.zeta[k], fl.dzeta[k]))
            .collect();
        let (z, dz) = combine(&bundle.base.states[k], &f)?;
        times.push(*t);
        zeta.push(z);
        dzeta.push(dz);
    }
    let (base, f) = bundle.fields_at(metric, s_star)?;
    let (z, dz) = combine(&base, &f)?;
    times.push(s_star);
    zeta.push(z);
    dzeta.push(dz);
    Ok(KernelField {
        coefficients: c.iter().copied().collect(),
        times,
        zeta,
        dzeta,
        sigma_min,
    })
}

/// Coefficients of the linearised geodesic equation
/// `ζ̈ = A_ξ ζ + A_v ζ̇`, by central differences of the right-hand side.
fn linearisation<const N: usize, M: Metric<N>>(
    metric: &M,
    s: &GeodesicState<N>,
) -> Result<(Matrix<N>, Matrix<N>)> {
    let mut a_xi = Matrix::<N>::zeros();
    let mut a_v = Matrix::<N>::zeros();
    if metric.is_position_independent() {
        return Ok((a_xi, a_v));
    }
    for j in 0..N {
        let hx = 1e-5 * s.xi[j].abs().max(1.0);
        let mut p = *s;
        let mut m = *s;
        p.xi[j] += hx;
        m.xi[j] -= hx;
        a_xi.set_column(
            j,
            &((geodesic_rhs(metric, &p)?.1 - geodesic_rhs(metric, &m)?.1) / (2.0 * hx)),
        );
        let hv = 1e-5 * s.v.amax().max(1e-3);
        let mut p = *s;
        let mut m = *s;
        p.v[j] += hv;
        m.v[j] -= hv;
        a_v.set_column(
            j,
            &((geodesic_rhs(metric, &p)?.1 - geodesic_rhs(metric, &m)?.1) / (2.0 * hv)),
        );
    }
    Ok((a_xi, a_v))
}

/// Integrates the linearised geodesic equation along `base` (RK4 on the
/// base's own step) from `(ζ(0), ζ̇(0))`.
pub fn jacobi_ode<const N: usize, M: Metric<N>>(
    metric: &M,
    base: &Trajectory<N>,
    zeta0: Vector<N>,
    dzeta0: Vector<N>,
) -> Result<JacobiField<N>> {
    let h = base.step;
    let rhs = |c: &(Matrix<N>, Matrix<N>), z: &Vector<N>, dz: &Vector<N>| (*dz, c.0 * z + c.1 * dz);
    let mut zeta = vec![zeta0];
    let mut dzeta = vec![dzeta0];
    let (mut z, mut dz) = (zeta0, dzeta0);
    for k in 0..base.len() - 1 {
        let s0 = base.states[k];
        let c0 = linearisation(metric, &s0)?;
        let cm = linearisation(metric, &rk4_step(metric, &s0, 0.5 * h)?)?;
        let c1 = linearisation(metric, &base.states[k + 1])?;
        let k1 = rhs(&c0, &z, &dz);
        let k2 = rhs(&cm, &(z + 0.5 * h * k1.0), &(dz + 0.5 * h * k1.1));
        let k3 = rhs(&cm, &(z + 0.5 * h * k2.0), &(dz + 0.5 * h * k2.1));
        let k4 = rhs(&c1, &(z + h * k3.0), &(dz + h * k3.1));
        z += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
        dz += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        zeta.push(z);
        dzeta.push(dz);
    }
    Ok(JacobiField { zeta, dzeta })
}

/// Condition numbers of `M` along the bundle, for the near-tangency report.
pub fn condition_profile<const N: usize>(bundle: &JacobiBundle<N>) -> Vec<f64> {
    (0..bundle.base.len())
        .map(|k| condition_number(&to_dmatrix(&bundle.jacobian(k))))
        .collect()
}
