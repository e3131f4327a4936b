//! Finsler metrics `φ(ξ; v)` with analytic derivative jets.
//!
//! Three families are supported: Euclidean, Riemannian `√(vᵀ g(ξ) v)` and
//! Randers `√(vᵀ a(ξ) v) + b(ξ)·v` with `|b|_{a⁻¹} < 1`. Position dependence is
//! polynomial so that first and second position derivatives are exact. Third
//! derivatives are never provided; callers that need them difference jets.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{solve_spd, Frame};
use crate::poly::Poly;
use crate::{Matrix, Vector};

/// Value and first/second derivatives of `φ` at `(ξ, v)`.
///
/// Index conventions: `d_xiv[(i, j)] = φ_{ξ^i v^j}`, every other block is
/// symmetric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricJet<const N: usize> {
    pub phi: f64,
    pub d_xi: Vector<N>,
    pub d_v: Vector<N>,
    pub d_xixi: Matrix<N>,
    pub d_xiv: Matrix<N>,
    pub d_vv: Matrix<N>,
}

impl<const N: usize> MetricJet<N> {
    fn zero() -> Self {
        MetricJet {
            phi: 0.0,
            d_xi: Vector::zeros(),
            d_v: Vector::zeros(),
            d_xixi: Matrix::zeros(),
            d_xiv: Matrix::zeros(),
            d_vv: Matrix::zeros(),
        }
    }

    /// Hessian of `ψ = φ²` in `v`: `2(φ φ_vv + φ_v φ_vᵀ)`.
    pub fn psi_vv(&self) -> Matrix<N> {
        2.0 * (self.phi * self.d_vv + self.d_v * self.d_v.transpose())
    }

    /// Mixed block `ψ_{v^i ξ^k} = 2(φ_{v^i} φ_{ξ^k} + φ φ_{ξ^k v^i})`.
    pub fn psi_vxi(&self) -> Matrix<N> {
        2.0 * (self.d_v * self.d_xi.transpose() + self.phi * self.d_xiv.transpose())
    }

    /// `ψ_ξ = 2 φ φ_ξ`.
    pub fn psi_xi(&self) -> Vector<N> {
        2.0 * self.phi * self.d_xi
    }

    /// Largest violation of the degree-one Euler identities
    /// `φ_v·v = φ`, `φ_vv v = 0`, `φ_ξv v = φ_ξ`.
    pub fn euler_violation(&self, v: &Vector<N>) -> f64 {
        let a = (self.d_v.dot(v) - self.phi).abs();
        let b = (self.d_vv * v).amax();
        let c = (self.d_xiv * v - self.d_xi).amax();
        a.max(b).max(c)
    }

    /// Max absolute entry-wise difference over all six blocks.
    pub fn max_difference(&self, other: &Self) -> f64 {
        [
            (self.phi - other.phi).abs(),
            (self.d_xi - other.d_xi).amax(),
            (self.d_v - other.d_v).amax(),
            (self.d_xixi - other.d_xixi).amax(),
            (self.d_xiv - other.d_xiv).amax(),
            (self.d_vv - other.d_vv).amax(),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    fn combine(a: &Self, wa: f64, b: &Self, wb: f64) -> Self {
        MetricJet {
            phi: wa * a.phi + wb * b.phi,
            d_xi: wa * a.d_xi + wb * b.d_xi,
            d_v: wa * a.d_v + wb * b.d_v,
            d_xixi: wa * a.d_xixi + wb * b.d_xixi,
            d_xiv: wa * a.d_xiv + wb * b.d_xiv,
            d_vv: wa * a.d_vv + wb * b.d_vv,
        }
    }
}

/// A Finsler metric on a coordinate domain of `R^N`.
pub trait Metric<const N: usize>: Sync {
    fn eval(&self, xi: &Vector<N>, v: &Vector<N>) -> Result<f64>;

    fn jet(&self, xi: &Vector<N>, v: &Vector<N>) -> Result<MetricJet<N>>;

    /// True when `φ` does not depend on `ξ`; geodesics are then straight lines.
    fn is_position_independent(&self) -> bool;
}

/// Symmetric matrix-valued polynomial field `ξ ↦ g(ξ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixField {
    entries: Vec<Vec<Poly>>,
    constant: Option<DMatrix<f64>>,
}

/// Covector-valued polynomial field `ξ ↦ b(ξ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovectorField {
    entries: Vec<Poly>,
    constant: Option<Vec<f64>>,
}

struct MatrixJet<const N: usize> {
    value: Matrix<N>,
    d: [Matrix<N>; N],
    dd: [[Matrix<N>; N]; N],
}

struct CovectorJet<const N: usize> {
    value: Vector<N>,
    d: [Vector<N>; N],
    dd: [[Vector<N>; N]; N],
}

impl MatrixField {
    pub fn constant(m: DMatrix<f64>) -> Self {
        let entries = (0..m.nrows())
            .map(|i| (0..m.ncols()).map(|j| Poly::constant(m[(i, j)])).collect())
            .collect();
        MatrixField {
            entries,
            constant: Some(m),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::constant(DMatrix::identity(n, n))
    }

    /// Field from polynomial entries; entries are symmetrised on evaluation.
    pub fn polynomial(entries: Vec<Vec<Poly>>) -> Result<Self> {
        let n = entries.len();
        if entries.iter().any(|row| row.len() != n) {
            return Err(Error::Invalid("metric matrix must be square".into()));
        }
        let constant = entries
            .iter()
            .all(|row| row.iter().all(Poly::is_constant))
            .then(|| DMatrix::from_fn(n, n, |i, j| entries[i][j].eval(&[])));
        Ok(MatrixField { entries, constant })
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn is_constant(&self) -> bool {
        self.constant.is_some()
    }

    fn max_variable(&self) -> usize {
        self.entries
            .iter()
            .flatten()
            .map(Poly::max_variable)
            .max()
            .unwrap_or(0)
    }

    /// Value at `ξ`.
    pub fn value<const N: usize>(&self, xi: &Vector<N>) -> Matrix<N> {
        if let Some(c) = &self.constant {
            return Matrix::from_fn(|i, j| 0.5 * (c[(i, j)] + c[(j, i)]));
        }
        Matrix::from_fn(|i, j| {
            0.5 * (self.entries[i][j].eval(xi.as_slice()) + self.entries[j][i].eval(xi.as_slice()))
        })
    }

    /// `∂g/∂ξ^k` for each `k`.
    pub fn gradient<const N: usize>(&self, xi: &Vector<N>) -> [Matrix<N>; N] {
        self.jet::<N>(xi).d
    }

    fn jet<const N: usize>(&self, xi: &Vector<N>) -> MatrixJet<N> {
        let mut out = MatrixJet {
            value: self.value(xi),
            d: [Matrix::zeros(); N],
            dd: [[Matrix::zeros(); N]; N],
        };
        if self.constant.is_some() {
            return out;
        }
        for i in 0..N {
            for j in 0..N {
                let a = self.entries[i][j].jet(xi.as_slice());
                let b = self.entries[j][i].jet(xi.as_slice());
                for k in 0..N {
                    out.d[k][(i, j)] = 0.5 * (a.grad[k] + b.grad[k]);
                    for l in 0..N {
                        out.dd[k][l][(i, j)] = 0.5 * (a.hess[k][l] + b.hess[k][l]);
                    }
                }
            }
        }
        out
    }
}

impl CovectorField {
    pub fn constant(b: Vec<f64>) -> Self {
        CovectorField {
            entries: b.iter().map(|&c| Poly::constant(c)).collect(),
            constant: Some(b),
        }
    }

    pub fn polynomial(entries: Vec<Poly>) -> Self {
        let constant = entries
            .iter()
            .all(Poly::is_constant)
            .then(|| entries.iter().map(|p| p.eval(&[])).collect());
        CovectorField { entries, constant }
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn is_constant(&self) -> bool {
        self.constant.is_some()
    }

    fn max_variable(&self) -> usize {
        self.entries
            .iter()
            .map(Poly::max_variable)
            .max()
            .unwrap_or(0)
    }

    pub fn value<const N: usize>(&self, xi: &Vector<N>) -> Vector<N> {
        match &self.constant {
            Some(c) => Vector::from_fn(|i, _| c[i]),
            None => Vector::from_fn(|i, _| self.entries[i].eval(xi.as_slice())),
        }
    }

    fn jet<const N: usize>(&self, xi: &Vector<N>) -> CovectorJet<N> {
        let mut out = CovectorJet {
            value: self.value(xi),
            d: [Vector::zeros(); N],
            dd: [[Vector::zeros(); N]; N],
        };
        if self.constant.is_some() {
            return out;
        }
        for i in 0..N {
            let p = self.entries[i].jet(xi.as_slice());
            for k in 0..N {
                out.d[k][i] = p.grad[k];
                for l in 0..N {
                    out.dd[k][l][i] = p.hess[k][l];
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MetricKind {
    Euclidean,
    Riemannian { g: MatrixField },
    Randers { a: MatrixField, b: CovectorField },
}

/// Immutable metric description; safe to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSpec {
    dim: usize,
    kind: MetricKind,
}

impl MetricSpec {
    pub fn euclidean(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(MetricSpec {
            dim,
            kind: MetricKind::Euclidean,
        })
    }

    pub fn riemannian(g: MatrixField) -> Result<Self> {
        let dim = g.dim();
        check_dim(dim)?;
        check_variables(g.max_variable(), dim)?;
        if let Some(c) = &g.constant {
            if c.clone().cholesky().is_none() {
                return Err(Error::NotPositiveDefinite);
            }
        }
        Ok(MetricSpec {
            dim,
            kind: MetricKind::Riemannian { g },
        })
    }

    pub fn randers(a: MatrixField, b: CovectorField) -> Result<Self> {
        let dim = a.dim();
        check_dim(dim)?;
        if b.dim() != dim {
            return Err(Error::Dimension {
                expected: dim,
                found: b.dim(),
            });
        }
        check_variables(a.max_variable().max(b.max_variable()), dim)?;
        if let (Some(am), Some(bv)) = (&a.constant, &b.constant) {
            let chol = am.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
            let bv = nalgebra::DVector::from_column_slice(bv);
            let norm = bv.dot(&chol.solve(&bv)).sqrt();
            if norm >= 1.0 {
                return Err(Error::RandersCondition { norm });
            }
        }
        Ok(MetricSpec {
            dim,
            kind: MetricKind::Randers { a, b },
        })
    }

    /// Randers metric with constant `a` and `b`.
    pub fn randers_constant(a: DMatrix<f64>, b: Vec<f64>) -> Result<Self> {
        Self::randers(MatrixField::constant(a), CovectorField::constant(b))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &MetricKind {
        &self.kind
    }

    /// `|b(ξ)|_{a(ξ)⁻¹}`, zero for non-Randers metrics.
    pub fn randers_norm<const N: usize>(&self, xi: &Vector<N>) -> Result<f64> {
        self.check_n::<N>()?;
        match &self.kind {
            MetricKind::Randers { a, b } => {
                let am = a.value(xi);
                let bv = b.value(xi);
                let x = solve_spd(&am, &bv).ok_or(Error::NotPositiveDefinite)?;
                Ok(bv.dot(&x).max(0.0).sqrt())
            }
            _ => Ok(0.0),
        }
    }

    /// Metric expressed in the local coordinates of `frame`.
    pub fn framed<const N: usize>(&self, frame: Frame<N>) -> Framed<'_, Self, N> {
        Framed { inner: self, frame }
    }

    fn check_n<const N: usize>(&self) -> Result<()> {
        if self.dim == N {
            Ok(())
        } else {
            Err(Error::Dimension {
                expected: self.dim,
                found: N,
            })
        }
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 2 || dim == 3 {
        Ok(())
    } else {
        Err(Error::Invalid(format!(
            "dimension must be 2 or 3, got {dim}"
        )))
    }
}

fn check_variables(max_var: usize, dim: usize) -> Result<()> {
    if max_var > dim {
        Err(Error::Invalid(format!(
            "coefficient uses x{max_var} in dimension {dim}"
        )))
    } else {
        Ok(())
    }
}

// Riemannian part √(vᵀ a v) with its derivative blocks; Randers adds b on top.
fn quadratic_jet<const N: usize>(
    a: &MatrixJet<N>,
    v: &Vector<N>,
    with_xi: bool,
) -> Result<MetricJet<N>> {
    let av = a.value * v;
    let r2 = v.dot(&av);
    if r2 <= 0.0 {
        return Err(Error::NotPositiveDefinite);
    }
    let r = r2.sqrt();
    let mut jet = MetricJet::zero();
    jet.phi = r;
    jet.d_v = av / r;
    jet.d_vv = a.value / r - av * av.transpose() / (r2 * r);
    if with_xi {
        let q: [f64; N] = std::array::from_fn(|k| v.dot(&(a.d[k] * v)));
        for k in 0..N {
            jet.d_xi[k] = q[k] / (2.0 * r);
            for l in 0..N {
                jet.d_xixi[(k, l)] =
                    v.dot(&(a.dd[k][l] * v)) / (2.0 * r) - q[k] * q[l] / (4.0 * r2 * r);
            }
            let akv = a.d[k] * v;
            for j in 0..N {
                jet.d_xiv[(k, j)] = akv[j] / r - q[k] * av[j] / (2.0 * r2 * r);
            }
        }
    }
    Ok(jet)
}

impl<const N: usize> Metric<N> for MetricSpec {
    fn eval(&self, xi: &Vector<N>, v: &Vector<N>) -> Result<f64> {
        self.check_n::<N>()?;
        if v.iter().all(|&c| c == 0.0) {
            return Err(Error::ZeroVector);
        }
        let quad = |a: &Matrix<N>| -> Result<f64> {
            let r2 = v.dot(&(a * v));
            if r2 <= 0.0 {
                Err(Error::NotPositiveDefinite)
            } else {
                Ok(r2.sqrt())
            }
        };
        match &self.kind {
            MetricKind::Euclidean => Ok(v.norm()),
            MetricKind::Riemannian { g } => quad(&g.value(xi)),
            MetricKind::Randers { a, b } => {
                if !(a.is_constant() && b.is_constant()) {
                    let norm = self.randers_norm(xi)?;
                    if norm >= 1.0 {
                        return Err(Error::RandersCondition { norm });
                    }
                }
                Ok(quad(&a.value(xi))? + b.value(xi).dot(v))
            }
        }
    }

    fn jet(&self, xi: &Vector<N>, v: &Vector<N>) -> Result<MetricJet<N>> {
        self.check_n::<N>()?;
        if v.iter().all(|&c| c == 0.0) {
            return Err(Error::ZeroVector);
        }
        match &self.kind {
            MetricKind::Euclidean => {
                let r = v.norm();
                let u = v / r;
                let mut jet = MetricJet::zero();
                jet.phi = r;
                jet.d_v = u;
                jet.d_vv = (Matrix::identity() - u * u.transpose()) / r;
                Ok(jet)
            }
            MetricKind::Riemannian { g } => quadratic_jet(&g.jet(xi), v, !g.is_constant()),
            MetricKind::Randers { a, b } => {
                let aj = a.jet(xi);
                let bj = b.jet(xi);
                if !(a.is_constant() && b.is_constant()) {
                    let x = solve_spd(&aj.value, &bj.value).ok_or(Error::NotPositiveDefinite)?;
                    let norm = bj.value.dot(&x).max(0.0).sqrt();
                    if norm >= 1.0 {
                        return Err(Error::RandersCondition { norm });
                    }
                }
                let mut jet = quadratic_jet(&aj, v, !a.is_constant())?;
                jet.phi += bj.value.dot(v);
                jet.d_v += bj.value;
                if !b.is_constant() {
                    for k in 0..N {
                        jet.d_xi[k] += bj.d[k].dot(v);
                        for l in 0..N {
                            jet.d_xixi[(k, l)] += bj.dd[k][l].dot(v);
                        }
                        for j in 0..N {
                            jet.d_xiv[(k, j)] += bj.d[k][j];
                        }
                    }
                }
                Ok(jet)
            }
        }
    }

    fn is_position_independent(&self) -> bool {
        match &self.kind {
            MetricKind::Euclidean => true,
            MetricKind::Riemannian { g } => g.is_constant(),
            MetricKind::Randers { a, b } => a.is_constant() && b.is_constant(),
        }
    }
}

/// A metric pulled back through a rigid frame: `φ_loc(x; w) = φ(p + R x; R w)`.
#[derive(Debug, Clone, Copy)]
pub struct Framed<'a, M, const N: usize> {
    inner: &'a M,
    frame: Frame<N>,
}

impl<'a, M: Metric<N>, const N: usize> Framed<'a, M, N> {
    pub fn new(inner: &'a M, frame: Frame<N>) -> Self {
        Framed { inner, frame }
    }

    pub fn frame(&self) -> &Frame<N> {
        &self.frame
    }
}

impl<const N: usize, M: Metric<N>> Metric<N> for Framed<'_, M, N> {
    fn eval(&self, xi: &Vector<N>, v: &Vector<N>) -> Result<f64> {
        self.inner
            .eval(&self.frame.to_ambient(xi), &self.frame.vec_to_ambient(v))
    }

    fn jet(&self, xi: &Vector<N>, v: &Vector<N>) -> Result<MetricJet<N>> {
        let j = self
            .inner
            .jet(&self.frame.to_ambient(xi), &self.frame.vec_to_ambient(v))?;
        let r = self.frame.rotation;
        let rt = r.transpose();
        Ok(MetricJet {
            phi: j.phi,
            d_xi: rt * j.d_xi,
            d_v: rt * j.d_v,
            d_xixi: rt * j.d_xixi * r,
            d_xiv: rt * j.d_xiv * r,
            d_vv: rt * j.d_vv * r,
        })
    }

    fn is_position_independent(&self) -> bool {
        self.inner.is_position_independent()
    }
}

/// Finite-difference settings for [`jet_fd`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdOptions {
    pub h: f64,
    pub richardson: bool,
}

impl Default for FdOptions {
    fn default() -> Self {
        FdOptions {
            h: 1e-4,
            richardson: false,
        }
    }
}

/// Central-difference jet built from [`Metric::eval`] alone.
pub fn jet_fd<const N: usize, M: Metric<N>>(
    metric: &M,
    xi: &Vector<N>,
    v: &Vector<N>,
    opts: FdOptions,
) -> Result<MetricJet<N>> {
    if opts.h <= 0.0 || !opts.h.is_finite() {
        return Err(Error::Invalid(format!("finite-difference step {}", opts.h)));
    }
    let coarse = jet_central(metric, xi, v, opts.h)?;
    if !opts.richardson {
        return Ok(coarse);
    }
    let fine = jet_central(metric, xi, v, 0.5 * opts.h)?;
    Ok(MetricJet::combine(&fine, 4.0 / 3.0, &coarse, -1.0 / 3.0))
}

fn jet_central<const N: usize, M: Metric<N>>(
    metric: &M,
    xi: &Vector<N>,
    v: &Vector<N>,
    h: f64,
) -> Result<MetricJet<N>> {
    let e = |k: usize| -> Vector<N> {
        let mut e = Vector::zeros();
        e[k] = h;
        e
    };
    let f = |dx: Vector<N>, dv: Vector<N>| metric.eval(&(xi + dx), &(v + dv));
    let z = Vector::<N>::zeros();
    let mut jet = MetricJet::zero();
    jet.phi = f(z, z)?;
    let h2 = h * h;
    for i in 0..N {
        let (xp, xm) = (f(e(i), z)?, f(-e(i), z)?);
        let (vp, vm) = (f(z, e(i))?, f(z, -e(i))?);
        jet.d_xi[i] = (xp - xm) / (2.0 * h);
        jet.d_v[i] = (vp - vm) / (2.0 * h);
        jet.d_xixi[(i, i)] = (xp - 2.0 * jet.phi + xm) / h2;
        jet.d_vv[(i, i)] = (vp - 2.0 * jet.phi + vm) / h2;
        for j in 0..N {
            if j > i {
                let xx = (f(e(i) + e(j), z)? - f(e(i) - e(j), z)? - f(e(j) - e(i), z)?
                    + f(-e(i) - e(j), z)?)
                    / (4.0 * h2);
                let vv = (f(z, e(i) + e(j))? - f(z, e(i) - e(j))? - f(z, e(j) - e(i))?
                    + f(z, -e(i) - e(j))?)
                    / (4.0 * h2);
                jet.d_xixi[(i, j)] = xx;
                jet.d_xixi[(j, i)] = xx;
                jet.d_vv[(i, j)] = vv;
                jet.d_vv[(j, i)] = vv;
            }
            jet.d_xiv[(i, j)] = (f(e(i), e(j))? - f(e(i), -e(j))? - f(-e(i), e(j))?
                + f(-e(i), -e(j))?)
                / (4.0 * h2);
        }
    }
    Ok(jet)
}

/// Maximum violation of each coordinate identity along the axis `{t e_N}` with
/// `v = e_N`, in this order: `φ ≡ 1`; `φ_ξ ≡ 0`; `φ_{v^α} ≡ 0, φ_{v^N} ≡ 1`;
/// `φ_{ξv} ≡ 0`; `φ_{v^j v^N} ≡ 0`; `φ_{ξ^j ξ^N} ≡ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpecialFormReport {
    pub violations: [f64; 6],
    pub samples: usize,
    pub tol: f64,
}

impl SpecialFormReport {
    pub fn max_violation(&self) -> f64 {
        self.violations.iter().copied().fold(0.0, f64::max)
    }

    pub fn passes(&self) -> bool {
        self.max_violation() <= self.tol
    }

    /// `Ok(())` when the gate passes.
    pub fn require(&self) -> Result<()> {
        if self.passes() {
            Ok(())
        } else {
            Err(Error::GateFailed {
                violation: self.max_violation(),
            })
        }
    }
}

/// Samples `t ∈ [0, t_max]` and reports how far the metric is from the
/// special coordinate form along the last axis.
pub fn check_special_form<const N: usize, M: Metric<N>>(
    metric: &M,
    t_max: f64,
    tol: f64,
) -> Result<SpecialFormReport> {
    const SAMPLES: usize = 65;
    let mut en = Vector::<N>::zeros();
    en[N - 1] = 1.0;
    let mut violations = [0.0f64; 6];
    for k in 0..SAMPLES {
        let t = t_max * k as f64 / (SAMPLES - 1) as f64;
        let jet = metric.jet(&(en * t), &en)?;
        let mut target_v = Vector::<N>::zeros();
        target_v[N - 1] = 1.0;
        let sample = [
            (jet.phi - 1.0).abs(),
            jet.d_xi.amax(),
            (jet.d_v - target_v).amax(),
            jet.d_xiv.amax(),
            jet.d_vv.column(N - 1).amax(),
            jet.d_xixi.column(N - 1).amax(),
        ];
        for (acc, s) in violations.iter_mut().zip(sample) {
            *acc = acc.max(s);
        }
    }
    Ok(SpecialFormReport {
        violations,
        samples: SAMPLES,
        tol,
    })
}
