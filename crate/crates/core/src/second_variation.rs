//! Second variation of the length of curves joining the boundary to a point
//! on a normal geodesic.
//!
//! Everything here works in the chart of a [`BoundaryPatch`]: the base point
//! is the origin, the boundary is the graph `x_n = f(x')` and perturbations
//! move only the tangential components `x'`. The finite-element form
//! [`assemble_form_special`] needs the metric in special form along the height
//! axis; [`second_difference_variation`] is a formula-free oracle valid for
//! any metric.

use nalgebra::{DMatrix, DVector};

use crate::boundary::BoundaryPatch;
use crate::error::{Error, Result};
use crate::geodesic::{shoot_normal, GeodesicState, Trajectory};
use crate::jacobi::{jacobi_bundle_fd, kernel_field, scan_conjugate, JacobiOptions, SCAN_POINTS};
use crate::metric::{check_special_form, Framed, Metric};
use crate::Vector;

pub const DEFAULT_NODES: usize = 256;
pub const GATE_TOL: f64 = 1e-8;

/// Composite Simpson quadrature of `φ(ξ; ξ̇)` over uniformly spaced samples
/// (a 3/8 panel closes an odd number of intervals).
pub fn curve_length<const N: usize, M: Metric<N>>(
    metric: &M,
    samples: &[GeodesicState<N>],
    h: f64,
) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::Invalid("curve needs at least two samples".into()));
    }
    let f: Vec<f64> = samples
        .iter()
        .map(|s| metric.eval(&s.xi, &s.v))
        .collect::<Result<_>>()?;
    Ok(simpson(&f, h))
}

pub(crate) fn simpson(f: &[f64], h: f64) -> f64 {
    let n = f.len() - 1;
    match n {
        0 => 0.0,
        1 => 0.5 * h * (f[0] + f[1]),
        _ => {
            let (even, tail) = if n.is_multiple_of(2) {
                (n, 0.0)
            } else {
                let k = n - 3;
                (
                    k,
                    3.0 * h / 8.0 * (f[k] + 3.0 * f[k + 1] + 3.0 * f[k + 2] + f[k + 3]),
                )
            };
            let mut s = 0.0;
            if even > 0 {
                s = f[0] + f[even];
                for (i, v) in f.iter().enumerate().take(even).skip(1) {
                    s += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
                }
                s *= h / 3.0;
            }
            s + tail
        }
    }
}

/// Piecewise-linear tangential perturbation on `N + 1` uniform nodes of
/// `[0, s̄]` with `ζ(s̄) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationFamily {
    pub s_bar: f64,
    /// `values[i]` is `ζ'(t_i)`; the last node is zero.
    values: Vec<Vec<f64>>,
}

impl VariationFamily {
    /// From the free node values `ζ'(t_0), …, ζ'(t_{N−1})`.
    pub fn new(s_bar: f64, free: Vec<Vec<f64>>) -> Result<Self> {
        if !(s_bar > 0.0) || free.is_empty() {
            return Err(Error::Invalid(
                "family needs s̄ > 0 and at least one free node".into(),
            ));
        }
        let m = free[0].len();
        if free.iter().any(|v| v.len() != m) || m == 0 {
            return Err(Error::Invalid("inconsistent node dimensions".into()));
        }
        let mut values = free;
        values.push(vec![0.0; m]);
        Ok(VariationFamily { s_bar, values })
    }

    /// Samples `g(t)` at the free nodes.
    pub fn from_fn(
        s_bar: f64,
        nodes: usize,
        m: usize,
        g: impl Fn(f64) -> Vec<f64>,
    ) -> Result<Self> {
        let free = (0..nodes)
            .map(|i| {
                let v = g(s_bar * i as f64 / nodes as f64);
                v.into_iter().take(m).collect()
            })
            .collect();
        Self::new(s_bar, free)
    }

    pub fn nodes(&self) -> usize {
        self.values.len() - 1
    }

    pub fn components(&self) -> usize {
        self.values[0].len()
    }

    pub fn spacing(&self) -> f64 {
        self.s_bar / self.nodes() as f64
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.values[i]
    }

    /// Free node values stacked as `[ζ(t_0); …; ζ(t_{N−1})]`.
    pub fn coefficients(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.nodes() * self.components(),
            self.values[..self.nodes()].iter().flatten().copied(),
        )
    }

    /// `(ζ'(t), ζ̇'(t))` on element `e`.
    fn on_element(&self, e: usize, t: f64) -> (Vec<f64>, Vec<f64>) {
        let h = self.spacing();
        let w = (t - e as f64 * h) / h;
        let (a, b) = (&self.values[e], &self.values[e + 1]);
        (
            a.iter()
                .zip(b)
                .map(|(x, y)| (1.0 - w) * x + w * y)
                .collect(),
            a.iter().zip(b).map(|(x, y)| (y - x) / h).collect(),
        )
    }
}

/// Normal geodesic from the patch base point in the patch's chart.
pub fn local_base<const N: usize, M: Metric<N>>(
    metric: &M,
    patch: &BoundaryPatch<N>,
    s_bar: f64,
    step: f64,
) -> Result<Trajectory<N>> {
    let local = Framed::new(metric, *patch.frame());
    shoot_normal(&local, &patch.local(), &vec![0.0; N - 1], s_bar, step, None)
}

const GAUSS5: [(f64, f64); 5] = [
    (0.0, 0.568_888_888_888_888_9),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
    (0.906_179_845_938_664, 0.236_926_885_056_189_1),
];

// Length of τ(ε, ·) = ξ + ε(ζ', 0) + (1 − t/s̄) f(εζ'(0)) e_n in the chart.
fn perturbed_length<const N: usize, M: Metric<N>>(
    local: &M,
    patch: &BoundaryPatch<N>,
    family: &VariationFamily,
    base_at: &[Vec<GeodesicState<N>>],
    eps: f64,
) -> Result<f64> {
    let x0: Vec<f64> = family.node(0).iter().map(|z| eps * z).collect();
    let f0 = patch.local().graph(&x0)?.f;
    let s_bar = family.s_bar;
    let h = family.spacing();
    let mut total = 0.0;
    for e in 0..family.nodes() {
        let mid = (e as f64 + 0.5) * h;
        for (q, (node, weight)) in GAUSS5.iter().enumerate() {
            let t = mid + 0.5 * h * node;
            let base = &base_at[e][q];
            let (z, dz) = family.on_element(e, t);
            let mut xi = base.xi;
            let mut v = base.v;
            for a in 0..N - 1 {
                xi[a] += eps * z[a];
                v[a] += eps * dz[a];
            }
            xi[N - 1] += (1.0 - t / s_bar) * f0;
            v[N - 1] -= f0 / s_bar;
            total += 0.5 * h * weight * local.eval(&xi, &v)?;
        }
    }
    Ok(total)
}

/// `d²/dε² I[τ(ε, ·)]` at `ε = 0` by a central second difference with one
/// Richardson step over `{ε, ε/2}`. `base` is the normal geodesic in the
/// patch's chart (see [`local_base`]) on at least `[0, s̄]`.
pub fn second_difference_variation<const N: usize, M: Metric<N>>(
    metric: &M,
    patch: &BoundaryPatch<N>,
    family: &VariationFamily,
    base: &Trajectory<N>,
    eps: f64,
) -> Result<f64> {
    if family.components() != N - 1 {
        return Err(Error::Dimension {
            expected: N - 1,
            found: family.components(),
        });
    }
    let local = Framed::new(metric, *patch.frame());
    let h = family.spacing();
    let base_at: Vec<Vec<GeodesicState<N>>> = (0..family.nodes())
        .map(|e| {
            let mid = (e as f64 + 0.5) * h;
            GAUSS5
                .iter()
                .map(|(node, _)| base.state_at(&local, mid + 0.5 * h * node))
                .collect::<Result<_>>()
        })
        .collect::<Result<_>>()?;
    let length = |e: f64| perturbed_length(&local, patch, family, &base_at, e);
    let i0 = length(0.0)?;
    let d2 = |e: f64| -> Result<f64> { Ok((length(e)? - 2.0 * i0 + length(-e)?) / (e * e)) };
    let coarse = d2(eps)?;
    let fine = d2(0.5 * eps)?;
    Ok((4.0 * fine - coarse) / 3.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    SpecialForm,
    FdOracle,
}

/// Second-variation form over the free node values of piecewise-linear
/// tangential perturbations.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm {
    pub q: DMatrix<f64>,
    /// Lumped mass weights per free unknown.
    pub mass: DVector<f64>,
    pub s_bar: f64,
    pub nodes: usize,
    pub provenance: Provenance,
}

impl QuadraticForm {
    pub fn eval(&self, family: &VariationFamily) -> f64 {
        let c = family.coefficients();
        (c.transpose() * &self.q * &c)[(0, 0)]
    }

    /// Smallest eigenvalue of the mass-normalised form `W^{-1/2} Q W^{-1/2}`;
    /// its sign is that of the form and it converges under refinement.
    pub fn lambda_min(&self) -> f64 {
        let w = self.mass.map(|m| 1.0 / m.sqrt());
        let scaled = DMatrix::from_fn(self.q.nrows(), self.q.ncols(), |i, j| {
            w[i] * self.q[(i, j)] * w[j]
        });
        scaled.symmetric_eigenvalues().min()
    }

    /// Smallest eigenvalue of `Q` itself.
    pub fn lambda_min_raw(&self) -> f64 {
        self.q.clone().symmetric_eigenvalues().min()
    }
}

/// Finite-element assembly on `N` elements of
/// `∫ φ_{ξ'ξ'} ζζ + φ_{v'v'} ζ̇ζ̇ dt − D²f(0') ζ(0)ζ(0)` with element-averaged
/// (trapezoidal) coefficients sampled along the base geodesic. Refuses metrics
/// that are not in special form along the height axis of the patch chart.
pub fn assemble_form_special<const N: usize, M: Metric<N>>(
    metric: &M,
    patch: &BoundaryPatch<N>,
    base: &Trajectory<N>,
    s_bar: f64,
    nodes: usize,
) -> Result<QuadraticForm> {
    let local = Framed::new(metric, *patch.frame());
    check_special_form::<N, _>(&local, s_bar, GATE_TOL)?.require()?;
    if nodes == 0 {
        return Err(Error::Invalid("need at least one element".into()));
    }
    let m = N - 1;
    let h = s_bar / nodes as f64;
    let coeffs: Vec<(DMatrix<f64>, DMatrix<f64>)> = (0..=nodes)
        .map(|i| {
            let st = base.state_at(&local, (h * i as f64).min(s_bar))?;
            let jet = local.jet(&st.xi, &st.v)?;
            Ok((
                DMatrix::from_fn(m, m, |a, b| jet.d_xixi[(a, b)]),
                DMatrix::from_fn(m, m, |a, b| jet.d_vv[(a, b)]),
            ))
        })
        .collect::<Result<_>>()?;
    let dim = nodes * m;
    let mut q = DMatrix::<f64>::zeros(dim, dim);
    for e in 0..nodes {
        let p = (&coeffs[e].0 + &coeffs[e + 1].0) * 0.5;
        let a = (&coeffs[e].1 + &coeffs[e + 1].1) * 0.5;
        // element mass h/6 [2 1; 1 2], stiffness 1/h [1 −1; −1 1]
        for (li, gi) in [e, e + 1].into_iter().enumerate() {
            for (lj, gj) in [e, e + 1].into_iter().enumerate() {
                if gi == nodes || gj == nodes {
                    continue;
                }
                let mass = if li == lj { h / 3.0 } else { h / 6.0 };
                let stiff = if li == lj { 1.0 / h } else { -1.0 / h };
                for al in 0..m {
                    for be in 0..m {
                        q[(gi * m + al, gj * m + be)] += mass * p[(al, be)] + stiff * a[(al, be)];
                    }
                }
            }
        }
    }
    let hess = patch.local().graph(&vec![0.0; m])?.hess;
    for al in 0..m {
        for be in 0..m {
            q[(al, be)] -= hess[(al, be)];
        }
    }
    let mass = DVector::from_fn(dim, |k, _| if k < m { 0.5 * h } else { h });
    Ok(QuadraticForm {
        q,
        mass,
        s_bar,
        nodes,
        provenance: Provenance::SpecialForm,
    })
}

/// `λ_min(Q)(s̄)` with the base geodesic shot to `s̄`.
pub fn lambda_min_at<const N: usize, M: Metric<N>>(
    metric: &M,
    patch: &BoundaryPatch<N>,
    s_bar: f64,
    nodes: usize,
    step: f64,
) -> Result<f64> {
    let base = local_base(metric, patch, s_bar, step)?;
    Ok(assemble_form_special(metric, patch, &base, s_bar, nodes)?.lambda_min())
}

/// First zero of `s̄ ↦ λ_min(Q)(s̄)` in `[lo, hi]` by bisection, assuming
/// `λ_min(lo) > 0 ≥ λ_min(hi)`.
pub fn lambda_first_zero<const N: usize, M: Metric<N>>(
    metric: &M,
    patch: &BoundaryPatch<N>,
    lo: f64,
    hi: f64,
    nodes: usize,
    tol: f64,
) -> Result<Option<f64>> {
    let step = 1e-3;
    let (mut lo, mut hi) = (lo, hi);
    if lambda_min_at(metric, patch, lo, nodes, step)? <= 0.0 {
        return Ok(None);
    }
    if lambda_min_at(metric, patch, hi, nodes, step)? > 0.0 {
        return Ok(None);
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if lambda_min_at(metric, patch, mid, nodes, step)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(0.5 * (lo + hi)))
}

/// Outcome of the degeneracy identity `J[ζ] = D²f(0')ζ'(0)ζ'(0)` for the
/// Jacobi field vanishing at the conjugate point.
#[derive(Debug, Clone, PartialEq)]
pub struct DegeneracyReport {
    pub s_star: f64,
    pub j_value: f64,
    pub boundary_value: f64,
    pub relative_error: f64,
}

impl DegeneracyReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.relative_error <= tol
    }
}

/// Builds the degenerate Jacobi field at `s*` (first conjugate distance
/// below `s_max`) and compares both sides of the identity. The field is
/// resampled with step `s*/N` and `J` evaluated by Simpson's rule.
pub fn degeneracy_identity_check<const N: usize, M: Metric<N>>(
    metric: &M,
    patch: &BoundaryPatch<N>,
    s_max: f64,
    nodes: usize,
) -> Result<DegeneracyReport> {
    let local = Framed::new(metric, *patch.frame());
    check_special_form::<N, _>(&local, s_max, GATE_TOL)?.require()?;
    let chart = patch.local();
    let zero = vec![0.0; N - 1];
    let scan_bundle = jacobi_bundle_fd(&local, &chart, &zero, s_max, JacobiOptions::default())?;
    let s_star = scan_conjugate(&local, &scan_bundle, SCAN_POINTS)?
        .s_star
        .ok_or_else(|| Error::NotApplicable(format!("no conjugate point below s = {s_max}")))?;
    let nodes = nodes + nodes % 2;
    let opts = JacobiOptions {
        step: s_star / nodes as f64,
        ..JacobiOptions::default()
    };
    let bundle = jacobi_bundle_fd(&local, &chart, &zero, s_star, opts)?;
    let kernel = kernel_field(&local, &bundle, s_star)?;
    // kernel samples coincide with the bundle samples; the last one is s* itself
    let m = N - 1;
    let integrand: Vec<f64> = bundle
        .base
        .states
        .iter()
        .zip(kernel.zeta.iter().zip(&kernel.dzeta))
        .map(|(st, (z, dz))| {
            let jet = local.jet(&st.xi, &st.v)?;
            let mut val = 0.0;
            for a in 0..m {
                for b in 0..m {
                    val += jet.d_xixi[(a, b)] * z[a] * z[b] + jet.d_vv[(a, b)] * dz[a] * dz[b];
                }
            }
            Ok(val)
        })
        .collect::<Result<_>>()?;
    let j_value = simpson(&integrand[..kernel.zeta.len()], bundle.base.step);
    let hess = chart.graph(&zero)?.hess;
    let z0: Vector<N> = kernel.zeta[0];
    let mut boundary_value = 0.0;
    for a in 0..m {
        for b in 0..m {
            boundary_value += hess[(a, b)] * z0[a] * z0[b];
        }
    }
    let relative_error =
        (j_value - boundary_value).abs() / boundary_value.abs().max(f64::MIN_POSITIVE);
    Ok(DegeneracyReport {
        s_star,
        j_value,
        boundary_value,
        relative_error,
    })
}

/// Straight-line "curve" samples, for length checks.
pub fn segment_samples<const N: usize>(
    a: &Vector<N>,
    b: &Vector<N>,
    n: usize,
) -> Vec<GeodesicState<N>> {
    let v = b - a;
    (0..=n)
        .map(|i| GeodesicState::new(a + v * (i as f64 / n as f64), v))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_rules() {
        let f: Vec<f64> = (0..=4).map(|i| (i as f64 * 0.25).powi(3)).collect();
        assert!((simpson(&f, 0.25) - 0.25).abs() < 1e-15);
        let f: Vec<f64> = (0..=5).map(|i| (i as f64 * 0.2).powi(3)).collect();
        assert!((simpson(&f, 0.2) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn family_nodes() {
        let fam = VariationFamily::from_fn(1.0, 4, 1, |t| vec![1.0 - t]).unwrap();
        assert_eq!(fam.nodes(), 4);
        assert_eq!(fam.node(4), &[0.0]);
        assert_eq!(fam.coefficients().len(), 4);
        let (z, dz) = fam.on_element(1, 0.375);
        assert!((z[0] - 0.625).abs() < 1e-15);
        assert!((dz[0] + 1.0).abs() < 1e-14);
    }
}
