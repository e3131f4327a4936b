//! The Finsler-normal initial velocity `V(y)` of geodesics leaving the
//! boundary, and its derivative along the boundary.
//!
//! `V` is the unique vector with `V·ν > 0`, `φ(y; V) = 1` and `∇_vφ(y; V)`
//! parallel to the Euclidean interior normal `ν`. Equivalently `V` maximises
//! `ν·w` over the indicatrix `φ(y; w) = 1`, which is what the fallback search
//! uses.

use nalgebra::DMatrix;

use crate::boundary::{BoundaryChart, BoundaryPatch, BoundaryPoint};
use crate::error::{Error, Result};
use crate::linalg::solve;
use crate::metric::{Framed, Metric};
use crate::{Matrix, Vector};

const MAX_NEWTON: usize = 40;
const RESIDUAL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct NormalData<const N: usize> {
    pub y: Vector<N>,
    pub v: Vector<N>,
    /// `∂V/∂x'_β` as columns; present after [`normal_sensitivity`].
    pub dv: Option<Vec<Vector<N>>>,
    /// Max-norm residual of the normal system at `v`.
    pub residual: f64,
    pub iterations: usize,
    /// Max difference between implicit and finite-difference `DV`.
    pub dv_fd_discrepancy: Option<f64>,
}

/// Residual vector `(φ(y;V) − 1, T̂_αᵀ ∇_vφ(y;V))` with unit tangents.
pub fn normal_residual<const N: usize, M: Metric<N>>(
    metric: &M,
    bp: &BoundaryPoint<N>,
    v: &Vector<N>,
) -> Result<f64> {
    let jet = metric.jet(&bp.y, v)?;
    let mut r = (jet.phi - 1.0).abs();
    for t in &bp.tangents {
        r = r.max((t.normalize().dot(&jet.d_v)).abs());
    }
    Ok(r)
}

fn newton_system<const N: usize, M: Metric<N>>(
    metric: &M,
    bp: &BoundaryPoint<N>,
    v: &Vector<N>,
) -> Result<(Vector<N>, Matrix<N>)> {
    let jet = metric.jet(&bp.y, v)?;
    let mut f = Vector::<N>::zeros();
    let mut jac = Matrix::<N>::zeros();
    f[0] = jet.phi - 1.0;
    jac.set_row(0, &jet.d_v.transpose());
    for (a, t) in bp.tangents.iter().enumerate() {
        let t = t.normalize();
        f[a + 1] = t.dot(&jet.d_v);
        jac.set_row(a + 1, &(t.transpose() * jet.d_vv));
    }
    Ok((f, jac))
}

fn newton<const N: usize, M: Metric<N>>(
    metric: &M,
    bp: &BoundaryPoint<N>,
    start: Vector<N>,
) -> Result<(Vector<N>, f64, usize)> {
    let mut v = start;
    let mut best = (v, f64::INFINITY, 0);
    for it in 0..MAX_NEWTON {
        let (f, jac) = newton_system(metric, bp, &v)?;
        let res = f.amax();
        if res < best.1 {
            best = (v, res, it);
        }
        if res < 1e-15 {
            break;
        }
        let step = solve(&jac, &f)
            .ok_or_else(|| Error::Convexity("singular normal-system Jacobian".into()))?;
        // keep iterates away from the origin where φ is not smooth
        let mut scale = 1.0;
        while (v - scale * step).norm() < 0.1 * v.norm() && scale > 1e-3 {
            scale *= 0.5;
        }
        v -= scale * step;
        if step.amax() < 1e-16 * v.amax() {
            break;
        }
    }
    Ok(best)
}

// Coarse search over directions for the maximiser of ν·w / φ(y; w).
fn indicatrix_search<const N: usize, M: Metric<N>>(
    metric: &M,
    bp: &BoundaryPoint<N>,
) -> Result<Vector<N>> {
    let dirs: Vec<Vector<N>> = match N {
        2 => (0..720)
            .map(|k| {
                let th = std::f64::consts::TAU * k as f64 / 720.0;
                Vector::<N>::from_fn(|i, _| if i == 0 { th.cos() } else { th.sin() })
            })
            .collect(),
        _ => {
            // Fibonacci sphere
            let n = 4000;
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..n)
                .map(|k| {
                    let z = 1.0 - 2.0 * (k as f64 + 0.5) / n as f64;
                    let r = (1.0 - z * z).sqrt();
                    let th = golden * k as f64;
                    Vector::<N>::from_fn(|i, _| match i {
                        0 => r * th.cos(),
                        1 => r * th.sin(),
                        _ => z,
                    })
                })
                .collect()
        }
    };
    let mut best = (Vector::<N>::zeros(), f64::NEG_INFINITY);
    for d in dirs {
        let phi = metric.eval(&bp.y, &d)?;
        let score = bp.normal.dot(&d) / phi;
        if score > best.1 {
            best = (d / phi, score);
        }
    }
    Ok(best.0)
}

/// Solves the normal system at a given boundary point, starting from `guess`
/// (or `ν`) and falling back to an indicatrix search if Newton stalls.
pub fn solve_normal_at<const N: usize, M: Metric<N>>(
    metric: &M,
    bp: &BoundaryPoint<N>,
    guess: Option<Vector<N>>,
) -> Result<NormalData<N>> {
    let start = guess.unwrap_or(bp.normal);
    let (mut v, mut residual, mut iterations) = newton(metric, bp, start)?;
    if !(residual < RESIDUAL_TOL) || v.dot(&bp.normal) <= 0.0 {
        let seed = indicatrix_search(metric, bp)?;
        let (v2, r2, i2) = newton(metric, bp, seed)?;
        v = v2;
        residual = r2;
        iterations += i2;
    }
    if !(residual < RESIDUAL_TOL) {
        return Err(Error::NoConvergence {
            what: "normal system",
            iterations,
            residual,
        });
    }
    let dot = v.dot(&bp.normal);
    if dot <= 0.0 {
        return Err(Error::WrongBranch { dot });
    }
    Ok(NormalData {
        y: bp.y,
        v,
        dv: None,
        residual,
        iterations,
        dv_fd_discrepancy: None,
    })
}

/// Normal velocity at chart coordinates `x'` of a boundary chart.
pub fn solve_normal<const N: usize, M: Metric<N>, B: BoundaryChart<N>>(
    metric: &M,
    chart: &B,
    x: &[f64],
) -> Result<NormalData<N>> {
    solve_normal_at(metric, &chart.boundary_point(x)?, None)
}

/// `∂V/∂x'` by implicit differentiation of the normal system at a solved point.
pub fn implicit_dv<const N: usize, M: Metric<N>>(
    metric: &M,
    bp: &BoundaryPoint<N>,
    v: &Vector<N>,
) -> Result<Vec<Vector<N>>> {
    let jet = metric.jet(&bp.y, v)?;
    // G(V; x') = (φ − 1, T_α(x')ᵀ ∇_vφ) with the raw tangents
    let mut gv = Matrix::<N>::zeros();
    gv.set_row(0, &jet.d_v.transpose());
    for (a, t) in bp.tangents.iter().enumerate() {
        gv.set_row(a + 1, &(t.transpose() * jet.d_vv));
    }
    let m = bp.tangents.len();
    let mut out = Vec::with_capacity(m);
    for b in 0..m {
        let tb = &bp.tangents[b];
        let mut gx = Vector::<N>::zeros();
        gx[0] = jet.d_xi.dot(tb);
        for a in 0..m {
            let ta = &bp.tangents[a];
            gx[a + 1] = bp.tangent_derivs[a][b].dot(&jet.d_v) + tb.dot(&(jet.d_xiv * ta));
        }
        let col = solve(&gv, &(-gx))
            .ok_or_else(|| Error::Convexity("degenerate normal-system Jacobian".into()))?;
        out.push(col);
    }
    Ok(out)
}

/// `∂V/∂x'` by central differences of [`solve_normal`].
pub fn fd_dv<const N: usize, M: Metric<N>, B: BoundaryChart<N>>(
    metric: &M,
    chart: &B,
    x: &[f64],
    h: f64,
) -> Result<Vec<Vector<N>>> {
    let center = solve_normal(metric, chart, x)?.v;
    (0..x.len())
        .map(|b| {
            let shifted = |s: f64| -> Result<Vector<N>> {
                let mut xs = x.to_vec();
                xs[b] += s;
                let bp = chart.boundary_point(&xs)?;
                Ok(solve_normal_at(metric, &bp, Some(center))?.v)
            };
            Ok((shifted(h)? - shifted(-h)?) / (2.0 * h))
        })
        .collect()
}

/// Normal data with `DV`; `h > 0` also computes the finite-difference
/// cross-check and records the discrepancy.
pub fn normal_sensitivity<const N: usize, M: Metric<N>, B: BoundaryChart<N>>(
    metric: &M,
    chart: &B,
    x: &[f64],
    h: f64,
) -> Result<NormalData<N>> {
    let bp = chart.boundary_point(x)?;
    let mut data = solve_normal_at(metric, &bp, None)?;
    let dv = implicit_dv(metric, &bp, &data.v)?;
    if h > 0.0 {
        let fd = fd_dv(metric, chart, x, h)?;
        let disc = dv
            .iter()
            .zip(&fd)
            .map(|(a, b)| (a - b).amax())
            .fold(0.0, f64::max);
        data.dv_fd_discrepancy = Some(disc);
    }
    data.dv = Some(dv);
    Ok(data)
}

/// Tangential block `φ_{v'v'}` and chart-coordinate `∇V'` at the patch base
/// point, together with `D²f(0')`.
pub struct CurvatureRelation {
    pub a: DMatrix<f64>,
    pub grad_v: DMatrix<f64>,
    pub hess_f: DMatrix<f64>,
}

impl CurvatureRelation {
    /// Max entry of `φ_{v'v'} ∇V' + D²f`.
    pub fn residual(&self) -> f64 {
        (&self.a * &self.grad_v + &self.hess_f).amax()
    }
}

/// Ingredients of the relation `φ_{v'v'}(0'; e_n) ∇V'(0') + D²f(0') = 0`,
/// expressed in the patch's chart. The relation itself is only expected to
/// hold when the metric is in special form along the chart's height axis.
pub fn curvature_relation<const N: usize, M: Metric<N>>(
    metric: &M,
    patch: &BoundaryPatch<N>,
) -> Result<CurvatureRelation> {
    let local_metric = Framed::new(metric, *patch.frame());
    let local_patch = patch.local();
    let zero = vec![0.0; N - 1];
    let data = normal_sensitivity(&local_metric, &local_patch, &zero, 0.0)?;
    let jet = local_metric.jet(&Vector::<N>::zeros(), &data.v)?;
    let m = N - 1;
    let dv = data.dv.expect("sensitivity computed");
    Ok(CurvatureRelation {
        a: DMatrix::from_fn(m, m, |i, j| jet.d_vv[(i, j)]),
        grad_v: DMatrix::from_fn(m, m, |i, b| dv[b][i]),
        hess_f: local_patch.graph(&zero)?.hess,
    })
}

/// Tangential components of `DV` in a patch's chart coordinates.
pub fn chart_dv<const N: usize>(patch: &BoundaryPatch<N>, dv: &[Vector<N>]) -> DMatrix<f64> {
    let m = N - 1;
    let local: Vec<Vector<N>> = dv.iter().map(|c| patch.frame().vec_to_local(c)).collect();
    DMatrix::from_fn(m, m, |i, b| local[b][i])
}
