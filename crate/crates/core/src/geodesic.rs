//! Arclength geodesics of a Finsler metric.
//!
//! Geodesics are integrated as Euler–Lagrange curves of `ψ = φ²`, which avoids
//! the reparametrisation degeneracy of the degree-one functional; trajectories
//! started with `φ(ξ; ξ̇) = 1` keep unit speed, so the parameter is arclength.

use std::fmt::Write as _;

use crate::boundary::BoundaryChart;
use crate::error::{Error, Result};
use crate::linalg::solve_spd;
use crate::metric::Metric;
use crate::normal::solve_normal;
use crate::{format_sig, Matrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeodesicState<const N: usize> {
    pub xi: Vector<N>,
    pub v: Vector<N>,
}

impl<const N: usize> GeodesicState<N> {
    pub fn new(xi: Vector<N>, v: Vector<N>) -> Self {
        GeodesicState { xi, v }
    }

    fn axpy(&self, h: f64, d: &(Vector<N>, Vector<N>)) -> Self {
        GeodesicState {
            xi: self.xi + h * d.0,
            v: self.v + h * d.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// Axis-aligned box; trajectories leaving it are truncated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox<const N: usize> {
    pub lo: Vector<N>,
    pub hi: Vector<N>,
}

impl<const N: usize> BoundingBox<N> {
    pub fn contains(&self, x: &Vector<N>) -> bool {
        (0..N).all(|i| x[i] >= self.lo[i] && x[i] <= self.hi[i])
    }
}

/// Dense samples `(t_i, state_i)` of one geodesic.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<const N: usize> {
    pub times: Vec<f64>,
    pub states: Vec<GeodesicState<N>>,
    /// Signed parameter increment between consecutive samples.
    pub step: f64,
    pub direction: Direction,
    /// The trajectory left the bounding box before reaching its target length.
    pub truncated: bool,
}

impl<const N: usize> Trajectory<N> {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last(&self) -> &GeodesicState<N> {
        self.states
            .last()
            .expect("trajectory has at least one sample")
    }

    pub fn final_time(&self) -> f64 {
        *self
            .times
            .last()
            .expect("trajectory has at least one sample")
    }

    /// State at an arbitrary parameter inside the sampled range, by one RK4
    /// sub-step from the preceding sample.
    pub fn state_at<M: Metric<N>>(&self, metric: &M, t: f64) -> Result<GeodesicState<N>> {
        let t0 = self.times[0];
        let k = ((t - t0) / self.step).floor();
        if !(k >= 0.0) || k as usize >= self.len() {
            return Err(Error::Invalid(format!("t = {t} outside the trajectory")));
        }
        let k = k as usize;
        let dt = t - self.times[k];
        if dt == 0.0 {
            return Ok(self.states[k]);
        }
        rk4_step(metric, &self.states[k], dt)
    }

    /// `max |φ(ξ; ξ̇) − 1|` along the samples.
    pub fn unit_speed_drift<M: Metric<N>>(&self, metric: &M) -> Result<f64> {
        self.states.iter().try_fold(0.0f64, |acc, s| {
            Ok(acc.max((metric.eval(&s.xi, &s.v)? - 1.0).abs()))
        })
    }

    /// CSV with columns `t, xi_1..xi_n, v_1..v_n`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for i in 1..=N {
            let _ = write!(out, ",xi_{i}");
        }
        for i in 1..=N {
            let _ = write!(out, ",v_{i}");
        }
        out.push('\n');
        for (t, s) in self.times.iter().zip(&self.states) {
            out.push_str(&format_sig(*t));
            for c in s.xi.iter().chain(s.v.iter()) {
                out.push(',');
                out.push_str(&format_sig(*c));
            }
            out.push('\n');
        }
        out
    }
}

/// Right-hand side `(ξ̇, v̇)` of the geodesic system:
/// `ψ_vv v̇ = ψ_ξ − ψ_vξ v`.
pub fn geodesic_rhs<const N: usize, M: Metric<N>>(
    metric: &M,
    state: &GeodesicState<N>,
) -> Result<(Vector<N>, Vector<N>)> {
    if metric.is_position_independent() {
        if state.v.iter().all(|&c| c == 0.0) {
            return Err(Error::ZeroVector);
        }
        return Ok((state.v, Vector::zeros()));
    }
    let jet = metric.jet(&state.xi, &state.v)?;
    let rhs = jet.psi_xi() - jet.psi_vxi() * state.v;
    let dv = solve_spd(&jet.psi_vv(), &rhs)
        .ok_or_else(|| Error::Convexity("ψ_vv is not positive definite".into()))?;
    Ok((state.v, dv))
}

pub fn rk4_step<const N: usize, M: Metric<N>>(
    metric: &M,
    s: &GeodesicState<N>,
    h: f64,
) -> Result<GeodesicState<N>> {
    let k1 = geodesic_rhs(metric, s)?;
    let k2 = geodesic_rhs(metric, &s.axpy(0.5 * h, &k1))?;
    let k3 = geodesic_rhs(metric, &s.axpy(0.5 * h, &k2))?;
    let k4 = geodesic_rhs(metric, &s.axpy(h, &k3))?;
    Ok(GeodesicState {
        xi: s.xi + (h / 6.0) * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
        v: s.v + (h / 6.0) * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
    })
}

/// Number of equal steps of size at most `step` covering `length`.
pub fn step_count(length: f64, step: f64) -> usize {
    ((length / step) - 1e-9).ceil().max(1.0) as usize
}

/// Fixed-step RK4 from `(t0, start)` for `n_steps` steps of signed size `h`.
pub fn integrate<const N: usize, M: Metric<N>>(
    metric: &M,
    start: GeodesicState<N>,
    t0: f64,
    h: f64,
    n_steps: usize,
    bbox: Option<&BoundingBox<N>>,
) -> Result<Trajectory<N>> {
    let mut times = Vec::with_capacity(n_steps + 1);
    let mut states = Vec::with_capacity(n_steps + 1);
    times.push(t0);
    states.push(start);
    let mut truncated = false;
    let mut s = start;
    for k in 1..=n_steps {
        s = rk4_step(metric, &s, h)?;
        if bbox.is_some_and(|b| !b.contains(&s.xi)) {
            truncated = true;
            break;
        }
        times.push(t0 + h * k as f64);
        states.push(s);
    }
    Ok(Trajectory {
        times,
        states,
        step: h,
        direction: if h >= 0.0 {
            Direction::Forward
        } else {
            Direction::Backward
        },
        truncated,
    })
}

/// End state of [`integrate`] without storing samples.
pub fn integrate_endpoint<const N: usize, M: Metric<N>>(
    metric: &M,
    start: GeodesicState<N>,
    h: f64,
    n_steps: usize,
) -> Result<GeodesicState<N>> {
    if metric.is_position_independent() {
        // straight line, RK4 is exact
        return Ok(GeodesicState {
            xi: start.xi + (h * n_steps as f64) * start.v,
            v: start.v,
        });
    }
    let mut s = start;
    for _ in 0..n_steps {
        s = rk4_step(metric, &s, h)?;
    }
    Ok(s)
}

/// Adaptive Dormand–Prince 5(4) integration to parameter length `length`
/// (signed by `direction`), keeping the estimated local error below `tol`.
pub fn integrate_adaptive<const N: usize, M: Metric<N>>(
    metric: &M,
    start: GeodesicState<N>,
    t0: f64,
    length: f64,
    direction: Direction,
    tol: f64,
) -> Result<Trajectory<N>> {
    const A: [[f64; 6]; 6] = [
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [
            19372.0 / 6561.0,
            -25360.0 / 2187.0,
            64448.0 / 6561.0,
            -212.0 / 729.0,
            0.0,
            0.0,
        ],
        [
            9017.0 / 3168.0,
            -355.0 / 33.0,
            46732.0 / 5247.0,
            49.0 / 176.0,
            -5103.0 / 18656.0,
            0.0,
        ],
        [
            35.0 / 384.0,
            0.0,
            500.0 / 1113.0,
            125.0 / 192.0,
            -2187.0 / 6784.0,
            11.0 / 84.0,
        ],
    ];
    const B5: [f64; 7] = [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
        0.0,
    ];
    const B4: [f64; 7] = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];
    let sign = if direction == Direction::Forward {
        1.0
    } else {
        -1.0
    };
    let mut times = vec![t0];
    let mut states = vec![start];
    let mut s = start;
    let mut done = 0.0;
    let mut h = (length * 1e-2).max(1e-6);
    let mut guard = 0usize;
    while done < length * (1.0 - 1e-14) {
        guard += 1;
        if guard > 1_000_000 {
            return Err(Error::NoConvergence {
                what: "adaptive integration",
                iterations: guard,
                residual: h,
            });
        }
        h = h.min(length - done);
        let hs = sign * h;
        let mut k: Vec<(Vector<N>, Vector<N>)> = Vec::with_capacity(7);
        k.push(geodesic_rhs(metric, &s)?);
        for row in A.iter() {
            let mut st = s;
            for (j, a) in row.iter().enumerate().take(k.len()) {
                st = st.axpy(hs * a, &k[j]);
            }
            k.push(geodesic_rhs(metric, &st)?);
        }
        let mut y5 = s;
        let mut y4 = s;
        for j in 0..7 {
            y5 = y5.axpy(hs * B5[j], &k[j]);
            y4 = y4.axpy(hs * B4[j], &k[j]);
        }
        let err = (y5.xi - y4.xi).amax().max((y5.v - y4.v).amax());
        if err <= tol || h < 1e-12 {
            done += h;
            s = y5;
            times.push(t0 + sign * done);
            states.push(s);
        }
        let factor = if err == 0.0 {
            5.0
        } else {
            0.9 * (tol / err).powf(0.2)
        };
        h *= factor.clamp(0.2, 5.0);
    }
    Ok(Trajectory {
        times,
        states,
        step: f64::NAN,
        direction,
        truncated: false,
    })
}

/// Normal geodesic from the boundary point over chart coordinates `x'`,
/// integrated to arclength `s_max`.
pub fn shoot_normal<const N: usize, M: Metric<N>, B: BoundaryChart<N>>(
    metric: &M,
    chart: &B,
    x: &[f64],
    s_max: f64,
    step: f64,
    bbox: Option<&BoundingBox<N>>,
) -> Result<Trajectory<N>> {
    let data = solve_normal(metric, chart, x)?;
    let n = step_count(s_max, step);
    integrate(
        metric,
        GeodesicState::new(data.y, data.v),
        0.0,
        s_max / n as f64,
        n,
        bbox,
    )
}

/// Solves `φ(X; basis · (σ', τ)) = 1` for `τ` by Newton from `τ = 1`.
pub fn tau_normalize_in<const N: usize, M: Metric<N>>(
    metric: &M,
    x: &Vector<N>,
    basis: &Matrix<N>,
    sigma: &[f64],
) -> Result<f64> {
    if sigma.len() != N - 1 {
        return Err(Error::Dimension {
            expected: N - 1,
            found: sigma.len(),
        });
    }
    let dir = |tau: f64| -> Vector<N> {
        let local = Vector::<N>::from_fn(|i, _| if i < N - 1 { sigma[i] } else { tau });
        basis * local
    };
    let last = basis.column(N - 1).into_owned();
    let mut tau = 1.0;
    for _ in 0..60 {
        let w = dir(tau);
        let jet = metric.jet(x, &w)?;
        let g = jet.phi - 1.0;
        let dg = jet.d_v.dot(&last);
        if dg <= 1e-12 {
            break;
        }
        let step = g / dg;
        tau -= step;
        if step.abs() <= 1e-15 * tau.abs().max(1.0) {
            let w = dir(tau);
            if (metric.eval(x, &w)? - 1.0).abs() <= 1e-12 && tau > 0.0 {
                return Ok(tau);
            }
            break;
        }
    }
    Err(Error::OutOfChart(format!(
        "no τ > 0 completes σ' = {sigma:?} to a unit vector"
    )))
}

/// `τ(σ', X)` in ambient coordinates: `φ(X; (σ', τ)) = 1`.
pub fn tau_normalize<const N: usize, M: Metric<N>>(
    metric: &M,
    x: &Vector<N>,
    sigma: &[f64],
) -> Result<f64> {
    tau_normalize_in(metric, x, &Matrix::identity(), sigma)
}

/// Backward geodesic `η(σ', X, t)` with `η(1) = X`, `η̇(1) = basis · (σ', τ)`,
/// integrated from `t = 1` down to `t = 1 − t_len` in `n_steps` equal steps.
pub fn shoot_backward_in<const N: usize, M: Metric<N>>(
    metric: &M,
    x: &Vector<N>,
    basis: &Matrix<N>,
    sigma: &[f64],
    t_len: f64,
    n_steps: usize,
) -> Result<Trajectory<N>> {
    let tau = tau_normalize_in(metric, x, basis, sigma)?;
    let w = basis * Vector::<N>::from_fn(|i, _| if i < N - 1 { sigma[i] } else { tau });
    integrate(
        metric,
        GeodesicState::new(*x, w),
        1.0,
        -t_len / n_steps as f64,
        n_steps,
        None,
    )
}

/// Backward geodesic in ambient coordinates with step at most `step`.
pub fn shoot_backward<const N: usize, M: Metric<N>>(
    metric: &M,
    x: &Vector<N>,
    sigma: &[f64],
    t_len: f64,
    step: f64,
) -> Result<Trajectory<N>> {
    shoot_backward_in(
        metric,
        x,
        &Matrix::identity(),
        sigma,
        t_len,
        step_count(t_len, step),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::Curve;
    use crate::metric::MetricSpec;
    use nalgebra::{DMatrix, Vector2};

    fn randers() -> MetricSpec {
        MetricSpec::randers_constant(DMatrix::identity(2, 2), vec![0.5, 0.0]).unwrap()
    }

    #[test]
    fn straight_lines_for_position_independent_metrics() {
        let s = GeodesicState::new(Vector2::new(0.1, 0.2), Vector2::new(0.3, -0.4));
        let (dx, dv) = geodesic_rhs::<2, _>(&randers(), &s).unwrap();
        assert_eq!(dx, s.v);
        assert_eq!(dv, Vector2::zeros());
    }

    #[test]
    fn euclidean_circle_normal_reaches_center() {
        let e = MetricSpec::euclidean(2).unwrap();
        let c = Curve::circle(Vector2::zeros(), 1.0).unwrap();
        let traj = shoot_normal(&e, &c, &[0.0], 1.0, 1e-3, None).unwrap();
        assert!(traj.last().xi.norm() < 1e-12);
        assert!((traj.final_time() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn randers_half_plane_normal_reaches_target() {
        let line = Curve::line(Vector2::zeros(), Vector2::new(1.0, 0.0)).unwrap();
        let foot = 1.0 / 3f64.sqrt();
        let traj = shoot_normal(&randers(), &line, &[foot], 3f64.sqrt() / 2.0, 1e-3, None).unwrap();
        assert!((traj.last().xi - Vector2::new(0.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn tau_examples() {
        let e = MetricSpec::euclidean(2).unwrap();
        let x = Vector2::new(0.3, 0.7);
        assert!((tau_normalize(&e, &x, &[0.6]).unwrap() - 0.8).abs() < 1e-13);
        assert!((tau_normalize(&e, &x, &[0.0]).unwrap() - 1.0).abs() < 1e-13);
        assert!((tau_normalize(&randers(), &x, &[0.0]).unwrap() - 1.0).abs() < 1e-13);
        assert!(matches!(
            tau_normalize(&e, &x, &[1.5]),
            Err(Error::OutOfChart(_))
        ));
    }

    #[test]
    fn backward_straight_line() {
        let r = randers();
        let x = Vector2::new(0.2, 0.9);
        let sigma = [0.3];
        let tau = tau_normalize(&r, &x, &sigma).unwrap();
        let traj = shoot_backward(&r, &x, &sigma, 0.7, 1e-2).unwrap();
        assert_eq!(traj.direction, Direction::Backward);
        for (t, s) in traj.times.iter().zip(&traj.states) {
            let expected = x - (1.0 - t) * Vector2::new(0.3, tau);
            assert!((s.xi - expected).norm() < 1e-12);
        }
        assert!((traj.final_time() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn adaptive_agrees_with_fixed_step() {
        let g = crate::metric::MatrixField::polynomial(vec![
            vec![
                "1 + 0.1*x1^2".parse().unwrap(),
                crate::poly::Poly::constant(0.0),
            ],
            vec![
                crate::poly::Poly::constant(0.0),
                "1 + 0.1*x1^2".parse().unwrap(),
            ],
        ])
        .unwrap();
        let m = MetricSpec::riemannian(g).unwrap();
        let v = Vector2::new(0.6, 0.8) / (1.0f64 + 0.1 * 0.25).sqrt();
        let s0 = GeodesicState::new(Vector2::new(0.5, 0.0), v);
        let fixed = integrate(&m, s0, 0.0, 1e-3, 1500, None).unwrap();
        let adapt = integrate_adaptive(&m, s0, 0.0, 1.5, Direction::Forward, 1e-12).unwrap();
        assert!((fixed.last().xi - adapt.last().xi).norm() < 1e-9);
    }

    #[test]
    fn csv_header_and_rows() {
        let e = MetricSpec::euclidean(2).unwrap();
        let s0 = GeodesicState::new(Vector2::zeros(), Vector2::new(1.0, 0.0));
        let t = integrate(&e, s0, 0.0, 0.5, 2, None).unwrap();
        let csv = t.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("t,xi_1,xi_2,v_1,v_2"));
        assert_eq!(csv.lines().count(), 4);
    }
}
