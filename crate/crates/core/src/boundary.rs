//! Boundary geometry: planar boundary curves, local graph patches
//! `y = (x', f(x'))` in adapted frames, and Euclidean interior normals.
//!
//! Sign convention: `D²f ≥ 0` means the boundary bends toward the interior, so
//! the unit disk seen from inside has `f''(0) = +1`.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector, Vector2};

use crate::error::{Error, Result};
use crate::linalg::{determinant, Frame};
use crate::{Matrix, Vector};

/// Univariate Taylor jet `(f, f', f'', f''')`.
#[derive(Debug, Clone, Copy)]
struct T3([f64; 4]);

impl T3 {
    fn var(x: f64, dx: f64) -> Self {
        T3([x, dx, 0.0, 0.0])
    }

    fn constant(c: f64) -> Self {
        T3([c, 0.0, 0.0, 0.0])
    }

    /// `h ∘ self` given `h, h', h'', h'''` at `self.0[0]`.
    fn compose(self, h: [f64; 4]) -> Self {
        let [_, f1, f2, f3] = self.0;
        T3([
            h[0],
            h[1] * f1,
            h[2] * f1 * f1 + h[1] * f2,
            h[3] * f1 * f1 * f1 + 3.0 * h[2] * f1 * f2 + h[1] * f3,
        ])
    }

    fn cos(self) -> Self {
        let (s, c) = self.0[0].sin_cos();
        self.compose([c, -s, -c, s])
    }

    fn sin(self) -> Self {
        let (s, c) = self.0[0].sin_cos();
        self.compose([s, c, -s, -c])
    }

    fn powf(self, p: f64) -> Self {
        let x = self.0[0];
        self.compose([
            x.powf(p),
            p * x.powf(p - 1.0),
            p * (p - 1.0) * x.powf(p - 2.0),
            p * (p - 1.0) * (p - 2.0) * x.powf(p - 3.0),
        ])
    }

    fn powi(self, n: u32) -> Self {
        (0..n).fold(T3::constant(1.0), |acc, _| acc * self)
    }

    fn scale(self, k: f64) -> Self {
        T3(self.0.map(|c| c * k))
    }
}

impl std::ops::Add for T3 {
    type Output = T3;
    fn add(self, o: T3) -> T3 {
        T3(std::array::from_fn(|i| self.0[i] + o.0[i]))
    }
}

impl std::ops::Mul for T3 {
    type Output = T3;
    fn mul(self, o: T3) -> T3 {
        let [f0, f1, f2, f3] = self.0;
        let [g0, g1, g2, g3] = o.0;
        T3([
            f0 * g0,
            f1 * g0 + f0 * g1,
            f2 * g0 + 2.0 * f1 * g1 + f0 * g2,
            f3 * g0 + 3.0 * f2 * g1 + 3.0 * f1 * g2 + f0 * g3,
        ])
    }
}

/// Shape of a planar boundary curve.
#[derive(Debug, Clone, PartialEq)]
pub enum CurveKind {
    /// Straight line through `point` along unit `direction`, parametrised by arclength.
    Line {
        point: Vector2<f64>,
        direction: Vector2<f64>,
    },
    Circle {
        center: Vector2<f64>,
        radius: f64,
    },
    /// `(a cos θ, b sin θ)` about `center`.
    Ellipse {
        center: Vector2<f64>,
        a: f64,
        b: f64,
    },
    /// `|x/a|^p + |y/b|^p = 1` for even integer `p`, in polar form.
    Superellipse {
        center: Vector2<f64>,
        a: f64,
        b: f64,
        p: u32,
    },
    /// Polar curve `r(θ) = R (1 + ε cos kθ)`.
    PerturbedCircle {
        center: Vector2<f64>,
        radius: f64,
        amplitude: f64,
        frequency: u32,
    },
}

/// Regular planar boundary curve. Closed curves use `u ∈ [0, 1)` with
/// counterclockwise orientation (`θ = 2πu`); a line uses arclength.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    kind: CurveKind,
    interior_left: bool,
}

/// `γ, γ', γ'', γ'''` at one parameter.
pub type CurveJet = [Vector2<f64>; 4];

impl Curve {
    /// `interior_inside` selects the bounded side of a closed curve (or the
    /// left side of a line) as the interior.
    pub fn new(kind: CurveKind, interior_inside: bool) -> Result<Self> {
        let positive = |x: f64, what: &str| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(Error::Invalid(format!("{what} must be positive, got {x}")))
            }
        };
        let kind = match kind {
            CurveKind::Line { point, direction } => {
                let n = direction.norm();
                positive(n, "line direction length")?;
                CurveKind::Line {
                    point,
                    direction: direction / n,
                }
            }
            CurveKind::Circle { radius, .. } => {
                positive(radius, "radius")?;
                kind
            }
            CurveKind::Ellipse { a, b, .. } => {
                positive(a, "semi-axis a")?;
                positive(b, "semi-axis b")?;
                kind
            }
            CurveKind::Superellipse { a, b, p, .. } => {
                positive(a, "semi-axis a")?;
                positive(b, "semi-axis b")?;
                if p < 2 || p % 2 != 0 {
                    return Err(Error::Invalid(format!(
                        "superellipse exponent must be even, got {p}"
                    )));
                }
                kind
            }
            CurveKind::PerturbedCircle {
                radius, amplitude, ..
            } => {
                positive(radius, "radius")?;
                if amplitude.abs() >= 1.0 {
                    return Err(Error::Invalid(format!(
                        "perturbation amplitude must satisfy |ε| < 1, got {amplitude}"
                    )));
                }
                kind
            }
        };
        Ok(Curve {
            kind,
            interior_left: interior_inside,
        })
    }

    pub fn circle(center: Vector2<f64>, radius: f64) -> Result<Self> {
        Self::new(CurveKind::Circle { center, radius }, true)
    }

    pub fn ellipse(a: f64, b: f64) -> Result<Self> {
        Self::new(
            CurveKind::Ellipse {
                center: Vector2::zeros(),
                a,
                b,
            },
            true,
        )
    }

    /// Line through `point` along `direction`, interior on the left.
    pub fn line(point: Vector2<f64>, direction: Vector2<f64>) -> Result<Self> {
        Self::new(CurveKind::Line { point, direction }, true)
    }

    pub fn kind(&self) -> &CurveKind {
        &self.kind
    }

    pub fn interior_left(&self) -> bool {
        self.interior_left
    }

    /// Same curve with the interior on the other side.
    pub fn flipped(&self) -> Self {
        Curve {
            kind: self.kind.clone(),
            interior_left: !self.interior_left,
        }
    }

    pub fn is_closed(&self) -> bool {
        !matches!(self.kind, CurveKind::Line { .. })
    }

    /// Wraps a parameter into `[0, 1)` for closed curves.
    pub fn wrap(&self, u: f64) -> f64 {
        if self.is_closed() {
            u.rem_euclid(1.0)
        } else {
            u
        }
    }

    /// Signed parameter difference `a − b`, shortest way round for closed curves.
    pub fn param_diff(&self, a: f64, b: f64) -> f64 {
        if self.is_closed() {
            let d = (a - b).rem_euclid(1.0);
            if d > 0.5 {
                d - 1.0
            } else {
                d
            }
        } else {
            a - b
        }
    }

    pub fn jet(&self, u: f64) -> CurveJet {
        let polar = |center: &Vector2<f64>, r: T3, th: T3| -> CurveJet {
            let x = r * th.cos();
            let y = r * th.sin();
            std::array::from_fn(|k| {
                let base = if k == 0 { *center } else { Vector2::zeros() };
                base + Vector2::new(x.0[k], y.0[k])
            })
        };
        match &self.kind {
            CurveKind::Line { point, direction } => [
                point + direction * u,
                *direction,
                Vector2::zeros(),
                Vector2::zeros(),
            ],
            CurveKind::Circle { center, radius } => {
                polar(center, T3::constant(*radius), T3::var(TAU * u, TAU))
            }
            CurveKind::Ellipse { center, a, b } => {
                let th = T3::var(TAU * u, TAU);
                let x = th.cos().scale(*a);
                let y = th.sin().scale(*b);
                std::array::from_fn(|k| {
                    let base = if k == 0 { *center } else { Vector2::zeros() };
                    base + Vector2::new(x.0[k], y.0[k])
                })
            }
            CurveKind::Superellipse { center, a, b, p } => {
                let th = T3::var(TAU * u, TAU);
                let f = th.cos().scale(1.0 / a).powi(*p) + th.sin().scale(1.0 / b).powi(*p);
                polar(center, f.powf(-1.0 / *p as f64), th)
            }
            CurveKind::PerturbedCircle {
                center,
                radius,
                amplitude,
                frequency,
            } => {
                let th = T3::var(TAU * u, TAU);
                let r = (th.scale(*frequency as f64).cos().scale(*amplitude) + T3::constant(1.0))
                    .scale(*radius);
                polar(center, r, th)
            }
        }
    }

    pub fn point(&self, u: f64) -> Vector2<f64> {
        self.jet(u)[0]
    }

    /// Euclidean interior unit normal at parameter `u`.
    pub fn normal(&self, u: f64) -> Vector2<f64> {
        let t = self.jet(u)[1].normalize();
        let left = Vector2::new(-t.y, t.x);
        if self.interior_left {
            left
        } else {
            -left
        }
    }

    /// Signed curvature toward the interior (positive for the disk seen from inside).
    pub fn curvature(&self, u: f64) -> f64 {
        let [_, d1, d2, _] = self.jet(u);
        let cross = d1.x * d2.y - d1.y * d2.x;
        let k = cross / d1.norm().powi(3);
        if self.interior_left {
            k
        } else {
            -k
        }
    }

    /// Whether `x` lies strictly on the interior side.
    pub fn contains(&self, x: &Vector2<f64>) -> bool {
        let inside = match &self.kind {
            CurveKind::Line { point, direction } => {
                let left = Vector2::new(-direction.y, direction.x);
                (x - point).dot(&left) > 0.0
            }
            CurveKind::Circle { center, radius } => (x - center).norm() < *radius,
            CurveKind::Ellipse { center, a, b } => {
                let d = x - center;
                (d.x / a).powi(2) + (d.y / b).powi(2) < 1.0
            }
            CurveKind::Superellipse { center, a, b, p } => {
                let d = x - center;
                (d.x / a).abs().powi(*p as i32) + (d.y / b).abs().powi(*p as i32) < 1.0
            }
            CurveKind::PerturbedCircle {
                center,
                radius,
                amplitude,
                frequency,
            } => {
                let d = x - center;
                let th = d.y.atan2(d.x);
                d.norm() < radius * (1.0 + amplitude * (*frequency as f64 * th).cos())
            }
        };
        if self.is_closed() {
            inside == self.interior_left
        } else {
            inside
        }
    }

    /// Parameter of the Euclidean-nearest boundary point.
    pub fn nearest_param(&self, x: &Vector2<f64>) -> f64 {
        if let CurveKind::Line { point, direction } = &self.kind {
            return (x - point).dot(direction);
        }
        const COARSE: usize = 1024;
        let mut best = (0.0, f64::INFINITY);
        for k in 0..COARSE {
            let u = k as f64 / COARSE as f64;
            let d = (self.point(u) - x).norm_squared();
            if d < best.1 {
                best = (u, d);
            }
        }
        // Newton on g(u) = (γ(u) − x)·γ'(u)
        let mut u = best.0;
        for _ in 0..30 {
            let [p, d1, d2, _] = self.jet(u);
            let g = (p - x).dot(&d1);
            let dg = d1.norm_squared() + (p - x).dot(&d2);
            if dg <= 0.0 {
                break;
            }
            let step = g / dg;
            u -= step.clamp(-2.0 / COARSE as f64, 2.0 / COARSE as f64);
            if step.abs() < 1e-15 {
                break;
            }
        }
        self.wrap(u)
    }

    /// Euclidean distance from `x` to the curve.
    pub fn distance(&self, x: &Vector2<f64>) -> f64 {
        let u = self.nearest_param(x);
        (self.point(u) - x).norm()
    }

    /// Interior normal at a boundary point; errors if `point` is farther than
    /// `tol` from the curve.
    pub fn normal_at(&self, point: &Vector2<f64>, tol: f64) -> Result<Vector2<f64>> {
        let u = self.nearest_param(point);
        let distance = (self.point(u) - point).norm();
        if distance > tol {
            return Err(Error::OffBoundary { distance });
        }
        Ok(self.normal(u))
    }

    /// Adapted chart at `u`: base point `γ(u)`, first axis along the tangent,
    /// height axis along the interior normal.
    pub fn adapted_chart(&self, u: f64) -> BoundaryPatch<2> {
        let [p, d1, _, _] = self.jet(u);
        let t = d1.normalize();
        let nu = self.normal(u);
        BoundaryPatch {
            shape: GraphShape::Curve {
                curve: self.clone(),
                u0: u,
            },
            frame: Frame {
                origin: p,
                rotation: Matrix::<2>::from_columns(&[t, nu]),
            },
        }
    }
}

/// Height function of a graph patch in its chart.
#[derive(Debug, Clone, PartialEq)]
pub enum GraphShape {
    Flat,
    /// `f(x') = ½ x'ᵀ H x'`.
    Quadratic(DMatrix<f64>),
    /// Cap of a sphere (circle for `N = 2`) of the given radius, bending toward
    /// the interior: `f(x') = R − √(R² − |x'|²)`.
    Sphere {
        radius: f64,
    },
    /// Graph of a planar curve over its tangent line at `u0`.
    Curve {
        curve: Curve,
        u0: f64,
    },
}

/// Local graph `y = frame(x', f(x'))` with `f(0') = 0`, `∇f(0') = 0'`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryPatch<const N: usize> {
    shape: GraphShape,
    frame: Frame<N>,
}

/// Height and its first two derivatives at one chart point.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphJet {
    pub f: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
}

impl<const N: usize> BoundaryPatch<N> {
    pub fn new(shape: GraphShape, frame: Frame<N>) -> Result<Self> {
        match &shape {
            GraphShape::Quadratic(h) => {
                if h.nrows() != N - 1 || h.ncols() != N - 1 {
                    return Err(Error::Dimension {
                        expected: N - 1,
                        found: h.nrows(),
                    });
                }
                if (h - h.transpose()).amax() > 1e-14 {
                    return Err(Error::Invalid("patch Hessian must be symmetric".into()));
                }
            }
            GraphShape::Sphere { radius } if !(*radius > 0.0) => {
                return Err(Error::Invalid(format!("sphere radius {radius}")));
            }
            GraphShape::Curve { .. } if N != 2 => {
                return Err(Error::Invalid("curve graphs are planar".into()));
            }
            _ => {}
        }
        Ok(BoundaryPatch { shape, frame })
    }

    /// Patch in its own chart coordinates (identity frame).
    pub fn local(&self) -> Self {
        BoundaryPatch {
            shape: self.shape.clone(),
            frame: Frame::identity(),
        }
    }

    pub fn shape(&self) -> &GraphShape {
        &self.shape
    }

    pub fn frame(&self) -> &Frame<N> {
        &self.frame
    }

    pub fn graph(&self, x: &[f64]) -> Result<GraphJet> {
        if x.len() != N - 1 {
            return Err(Error::Dimension {
                expected: N - 1,
                found: x.len(),
            });
        }
        let m = N - 1;
        let xv = DVector::from_column_slice(x);
        match &self.shape {
            GraphShape::Flat => Ok(GraphJet {
                f: 0.0,
                grad: DVector::zeros(m),
                hess: DMatrix::zeros(m, m),
            }),
            GraphShape::Quadratic(h) => Ok(GraphJet {
                f: 0.5 * xv.dot(&(h * &xv)),
                grad: h * &xv,
                hess: h.clone(),
            }),
            GraphShape::Sphere { radius } => {
                let s2 = radius * radius - xv.norm_squared();
                if s2 <= 0.0 {
                    return Err(Error::OutOfChart(format!(
                        "|x'| beyond sphere radius {radius}"
                    )));
                }
                let s = s2.sqrt();
                Ok(GraphJet {
                    f: radius - s,
                    grad: &xv / s,
                    hess: DMatrix::identity(m, m) / s + &xv * xv.transpose() / (s2 * s),
                })
            }
            GraphShape::Curve { curve, u0 } => curve_graph(curve, *u0, x[0]),
        }
    }

    /// Ambient boundary point over chart coordinates `x'`.
    pub fn point(&self, x: &[f64]) -> Result<Vector<N>> {
        let g = self.graph(x)?;
        let local = Vector::<N>::from_fn(|i, _| if i < N - 1 { x[i] } else { g.f });
        Ok(self.frame.to_ambient(&local))
    }

    /// Interior unit normal at an ambient point of the patch.
    pub fn normal_at(&self, point: &Vector<N>, tol: f64) -> Result<Vector<N>> {
        let local = self.frame.to_local(point);
        let x: Vec<f64> = local.iter().take(N - 1).copied().collect();
        let g = self.graph(&x)?;
        let distance = (local[N - 1] - g.f).abs();
        if distance > tol {
            return Err(Error::OffBoundary { distance });
        }
        Ok(self.frame.vec_to_ambient(&local_normal::<N>(&g.grad)))
    }
}

fn local_normal<const N: usize>(grad: &DVector<f64>) -> Vector<N> {
    Vector::<N>::from_fn(|i, _| if i < N - 1 { -grad[i] } else { 1.0 }).normalize()
}

// Height of a planar curve over its tangent line at u0.
fn curve_graph(curve: &Curve, u0: f64, x: f64) -> Result<GraphJet> {
    let [p, d1, _, _] = curve.jet(u0);
    let t = d1.normalize();
    let nu = curve.normal(u0);
    let speed = d1.norm();
    // solve t·(γ(u) − p) = x for u near u0
    let mut u = u0 + x / speed;
    let mut converged = false;
    for _ in 0..50 {
        let [q, e1, _, _] = curve.jet(u);
        let a = t.dot(&(q - p)) - x;
        let da = t.dot(&e1);
        if da <= 0.0 {
            break;
        }
        u -= a / da;
        if a.abs() < 1e-15 * (1.0 + x.abs()) {
            converged = true;
            break;
        }
    }
    let [q, e1, e2, _] = curve.jet(u);
    let a1 = t.dot(&e1);
    if (!converged && (t.dot(&(q - p)) - x).abs() > 1e-12) || a1 <= 0.0 {
        return Err(Error::OutOfChart(format!(
            "curve is not a graph over its tangent at offset {x}"
        )));
    }
    let a2 = t.dot(&e2);
    let b1 = nu.dot(&e1);
    let b2 = nu.dot(&e2);
    Ok(GraphJet {
        f: nu.dot(&(q - p)),
        grad: DVector::from_element(1, b1 / a1),
        hess: DMatrix::from_element(1, 1, (b2 * a1 - b1 * a2) / (a1 * a1 * a1)),
    })
}

/// Boundary point with its parametrisation data, all in the coordinates the
/// metric is expressed in.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryPoint<const N: usize> {
    pub y: Vector<N>,
    /// `∂y/∂x'_α`.
    pub tangents: Vec<Vector<N>>,
    /// `∂²y/∂x'_α∂x'_β`, indexed `[α][β]`.
    pub tangent_derivs: Vec<Vec<Vector<N>>>,
    /// Euclidean interior unit normal.
    pub normal: Vector<N>,
    /// Sign of `det[T_1, …, T_{N−1}, ν]`.
    pub orientation: f64,
}

/// Anything that parametrises a piece of boundary by `N − 1` coordinates.
pub trait BoundaryChart<const N: usize>: Sync {
    fn boundary_point(&self, x: &[f64]) -> Result<BoundaryPoint<N>>;
}

impl<const N: usize> BoundaryChart<N> for BoundaryPatch<N> {
    fn boundary_point(&self, x: &[f64]) -> Result<BoundaryPoint<N>> {
        let g = self.graph(x)?;
        let r = &self.frame.rotation;
        let m = N - 1;
        let local_y = Vector::<N>::from_fn(|i, _| if i < m { x[i] } else { g.f });
        let tangents = (0..m)
            .map(|a| {
                let mut t = Vector::<N>::zeros();
                t[a] = 1.0;
                t[N - 1] = g.grad[a];
                r * t
            })
            .collect();
        let tangent_derivs = (0..m)
            .map(|a| {
                (0..m)
                    .map(|b| {
                        let mut t = Vector::<N>::zeros();
                        t[N - 1] = g.hess[(a, b)];
                        r * t
                    })
                    .collect()
            })
            .collect();
        Ok(BoundaryPoint {
            y: self.frame.to_ambient(&local_y),
            tangents,
            tangent_derivs,
            normal: r * local_normal::<N>(&g.grad),
            orientation: determinant(r).signum(),
        })
    }
}

impl BoundaryChart<2> for Curve {
    fn boundary_point(&self, x: &[f64]) -> Result<BoundaryPoint<2>> {
        if x.len() != 1 {
            return Err(Error::Dimension {
                expected: 1,
                found: x.len(),
            });
        }
        let [p, d1, d2, _] = self.jet(x[0]);
        if d1.norm() == 0.0 {
            return Err(Error::Invalid("singular curve parametrisation".into()));
        }
        Ok(BoundaryPoint {
            y: p,
            tangents: vec![d1],
            tangent_derivs: vec![vec![d2]],
            normal: self.normal(x[0]),
            orientation: if self.interior_left { 1.0 } else { -1.0 },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_circle() -> Curve {
        Curve::circle(Vector2::zeros(), 1.0).unwrap()
    }

    #[test]
    fn circle_chart_curvature_is_one() {
        for u in [0.0, 0.13, 0.5, 0.77] {
            let patch = unit_circle().adapted_chart(u);
            let g = patch.graph(&[0.0]).unwrap();
            assert!(g.f.abs() < 1e-15);
            assert!(g.grad[0].abs() < 1e-12);
            assert!((g.hess[(0, 0)] - 1.0).abs() < 1e-12, "{}", g.hess[(0, 0)]);
            // f(x) = 1 − √(1 − x²)
            let x = 0.3;
            let g = patch.graph(&[x]).unwrap();
            assert!((g.f - (1.0 - (1.0f64 - x * x).sqrt())).abs() < 1e-12);
        }
    }

    #[test]
    fn straight_line_is_flat() {
        let line = Curve::line(Vector2::new(0.0, 0.0), Vector2::new(1.0, 0.0)).unwrap();
        let patch = line.adapted_chart(0.4);
        for x in [-0.5, 0.0, 0.7] {
            let g = patch.graph(&[x]).unwrap();
            assert!(g.f.abs() < 1e-15 && g.hess[(0, 0)].abs() < 1e-15);
        }
    }

    #[test]
    fn ellipse_vertex_curvature() {
        let e = Curve::ellipse(2.0, 1.0).unwrap();
        let patch = e.adapted_chart(0.0);
        let g = patch.graph(&[0.0]).unwrap();
        assert!((g.hess[(0, 0)] - 2.0).abs() < 1e-12);
        assert!((e.curvature(0.0) - 2.0).abs() < 1e-12);
        // FD of the graph
        let h = 1e-3;
        let fd =
            (patch.graph(&[h]).unwrap().f - 2.0 * g.f + patch.graph(&[-h]).unwrap().f) / (h * h);
        assert!((fd - 2.0).abs() < 1e-5);
    }

    #[test]
    fn normals() {
        let n = unit_circle()
            .normal_at(&Vector2::new(1.0, 0.0), 1e-9)
            .unwrap();
        assert!((n - Vector2::new(-1.0, 0.0)).norm() < 1e-12);
        let line = Curve::line(Vector2::zeros(), Vector2::new(1.0, 0.0)).unwrap();
        let n = line.normal_at(&Vector2::new(3.0, 0.0), 1e-9).unwrap();
        assert!((n - Vector2::new(0.0, 1.0)).norm() < 1e-15);
        let e = Curve::ellipse(2.0, 1.0).unwrap();
        let n = e.normal_at(&Vector2::new(2.0, 0.0), 1e-9).unwrap();
        assert!((n - Vector2::new(-1.0, 0.0)).norm() < 1e-12);
        assert!(matches!(
            unit_circle().normal_at(&Vector2::new(0.5, 0.0), 1e-6),
            Err(Error::OffBoundary { .. })
        ));
        let flipped = unit_circle().flipped();
        let n2 = flipped.normal_at(&Vector2::new(1.0, 0.0), 1e-9).unwrap();
        assert!((n2 + Vector2::new(-1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn taylor_derivatives_match_fd() {
        let curves = [
            Curve::new(
                CurveKind::Superellipse {
                    center: Vector2::new(0.1, -0.2),
                    a: 1.5,
                    b: 1.0,
                    p: 4,
                },
                true,
            )
            .unwrap(),
            Curve::new(
                CurveKind::PerturbedCircle {
                    center: Vector2::zeros(),
                    radius: 1.0,
                    amplitude: 0.05,
                    frequency: 3,
                },
                true,
            )
            .unwrap(),
            Curve::ellipse(2.0, 1.0).unwrap(),
        ];
        let h = 1e-5;
        for c in &curves {
            for u in [0.03, 0.31, 0.62] {
                let j = c.jet(u);
                let jp = c.jet(u + h);
                let jm = c.jet(u - h);
                for k in 0..3 {
                    let fd = (jp[k] - jm[k]) / (2.0 * h);
                    let scale = 1.0 + j[k + 1].norm();
                    assert!((fd - j[k + 1]).norm() / scale < 1e-7, "order {k} at {u}");
                }
            }
        }
    }

    #[test]
    fn chart_reproduces_curve_points() {
        let e = Curve::ellipse(2.0, 1.0).unwrap();
        for u in [0.0, 0.1, 0.37] {
            let patch = e.adapted_chart(u);
            for x in [-0.05, 0.02, 0.04] {
                let y = patch.point(&[x]).unwrap();
                assert!(e.distance(&y) < 1e-10);
            }
        }
    }

    #[test]
    fn sphere_patch_in_three_dimensions() {
        let p =
            BoundaryPatch::<3>::new(GraphShape::Sphere { radius: 2.0 }, Frame::identity()).unwrap();
        let g = p.graph(&[0.0, 0.0]).unwrap();
        assert!((g.hess - DMatrix::identity(2, 2) * 0.5).amax() < 1e-15);
        let bp = p.boundary_point(&[0.3, -0.2]).unwrap();
        for t in &bp.tangents {
            assert!(t.dot(&bp.normal).abs() < 1e-14);
        }
        assert_eq!(bp.orientation, 1.0);
    }

    #[test]
    fn contains_respects_orientation() {
        let c = unit_circle();
        assert!(c.contains(&Vector2::new(0.2, 0.1)));
        assert!(!c.flipped().contains(&Vector2::new(0.2, 0.1)));
        assert!(c.flipped().contains(&Vector2::new(2.0, 0.1)));
    }
}
