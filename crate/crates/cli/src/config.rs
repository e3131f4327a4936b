//! JSON run configuration.

use finsler_core::boundary::{Curve, CurveKind};
use finsler_core::metric::{CovectorField, MatrixField, MetricSpec};
use finsler_core::poly::Poly;
use nalgebra::{DMatrix, Vector2};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// A metric coefficient: a number or a polynomial in `x1, x2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Coef {
    Number(f64),
    Expr(String),
}

impl Coef {
    fn poly(&self) -> Result<Poly, CliError> {
        match self {
            Coef::Number(x) => Ok(Poly::constant(*x)),
            Coef::Expr(s) => s
                .parse()
                .map_err(|e| CliError::Config(format!("bad coefficient {s:?}: {e}"))),
        }
    }

    fn constant(&self) -> Option<f64> {
        match self {
            Coef::Number(x) => Some(*x),
            Coef::Expr(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MetricConfig {
    Euclidean,
    Riemannian { g: [[Coef; 2]; 2] },
    Randers { a: [[Coef; 2]; 2], b: [Coef; 2] },
}

fn invalid(e: finsler_core::Error) -> CliError {
    CliError::Config(e.to_string())
}

fn matrix_field(m: &[[Coef; 2]; 2]) -> Result<MatrixField, CliError> {
    let consts: Option<Vec<f64>> = m.iter().flatten().map(Coef::constant).collect();
    if let Some(c) = consts {
        return Ok(MatrixField::constant(DMatrix::from_row_slice(2, 2, &c)));
    }
    let rows = m
        .iter()
        .map(|row| row.iter().map(Coef::poly).collect::<Result<Vec<_>, _>>())
        .collect::<Result<Vec<_>, _>>()?;
    MatrixField::polynomial(rows).map_err(invalid)
}

impl MetricConfig {
    pub fn build(&self) -> Result<MetricSpec, CliError> {
        Ok(match self {
            MetricConfig::Euclidean => MetricSpec::euclidean(2).map_err(invalid)?,
            MetricConfig::Riemannian { g } => {
                MetricSpec::riemannian(matrix_field(g)?).map_err(invalid)?
            }
            MetricConfig::Randers { a, b } => {
                let b = match (b[0].constant(), b[1].constant()) {
                    (Some(x), Some(y)) => CovectorField::constant(vec![x, y]),
                    _ => CovectorField::polynomial(vec![b[0].poly()?, b[1].poly()?]),
                };
                MetricSpec::randers(matrix_field(a)?, b).map_err(invalid)?
            }
        })
    }
}

/// Which side of the curve is the domain.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interior {
    #[default]
    Inside,
    Outside,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BoundaryConfig {
    Circle {
        #[serde(default)]
        center: [f64; 2],
        #[serde(default)]
        interior: Interior,
        radius: f64,
    },
    Ellipse {
        #[serde(default)]
        center: [f64; 2],
        #[serde(default)]
        interior: Interior,
        a: f64,
        b: f64,
    },
    Superellipse {
        #[serde(default)]
        center: [f64; 2],
        #[serde(default)]
        interior: Interior,
        a: f64,
        b: f64,
        p: u32,
    },
    PerturbedCircle {
        #[serde(default)]
        center: [f64; 2],
        #[serde(default)]
        interior: Interior,
        radius: f64,
        amplitude: f64,
        frequency: u32,
    },
}

impl BoundaryConfig {
    pub fn build(&self) -> Result<Curve, CliError> {
        let v = |c: &[f64; 2]| Vector2::new(c[0], c[1]);
        let kind = match self {
            BoundaryConfig::Circle { center, radius, .. } => CurveKind::Circle {
                center: v(center),
                radius: *radius,
            },
            BoundaryConfig::Ellipse { center, a, b, .. } => CurveKind::Ellipse {
                center: v(center),
                a: *a,
                b: *b,
            },
            BoundaryConfig::Superellipse {
                center, a, b, p, ..
            } => CurveKind::Superellipse {
                center: v(center),
                a: *a,
                b: *b,
                p: *p,
            },
            BoundaryConfig::PerturbedCircle {
                center,
                radius,
                amplitude,
                frequency,
                ..
            } => CurveKind::PerturbedCircle {
                center: v(center),
                radius: *radius,
                amplitude: *amplitude,
                frequency: *frequency,
            },
        };
        Curve::new(kind, self.interior() == Interior::Inside).map_err(invalid)
    }

    pub fn interior(&self) -> Interior {
        match self {
            BoundaryConfig::Circle { interior, .. }
            | BoundaryConfig::Ellipse { interior, .. }
            | BoundaryConfig::Superellipse { interior, .. }
            | BoundaryConfig::PerturbedCircle { interior, .. } => *interior,
        }
    }
}

/// Check tolerances; every field has a documented default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub euler: f64,
    pub jet_fd: f64,
    pub normal_residual: f64,
    pub special_form: f64,
    pub unit_speed: f64,
    pub jacobi_agreement: f64,
    pub curvature_relation: f64,
    pub second_variation: f64,
    pub degeneracy: f64,
    pub lambda_zero: f64,
    pub newton_residual: f64,
    pub reconstruction: f64,
    pub gradient: f64,
    pub directional: f64,
    /// Allowed distance of the Hessian Richardson ratio from 4.
    pub hessian_ratio: f64,
    pub jacobian_margin: f64,
    pub lipschitz: f64,
    pub oracle: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            euler: 1e-10,
            jet_fd: 1e-6,
            normal_residual: 1e-12,
            special_form: 1e-8,
            unit_speed: 1e-8,
            jacobi_agreement: 1e-5,
            curvature_relation: 1e-6,
            second_variation: 1e-3,
            degeneracy: 1e-3,
            lambda_zero: 2e-3,
            newton_residual: 1e-10,
            reconstruction: 1e-6,
            gradient: 1e-4,
            directional: 1e-4,
            hessian_ratio: 0.5,
            jacobian_margin: 1e-6,
            lipschitz: 1e-9,
            oracle: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub h: f64,
    pub r: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig { h: 0.005, r: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConjugateConfig {
    /// Boundary samples in the sweep.
    pub samples: usize,
}

impl Default for ConjugateConfig {
    fn default() -> Self {
        ConjugateConfig { samples: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SecondVarConfig {
    /// Boundary parameter of the foot.
    pub foot: f64,
    /// Range of `s̄` for the `λ_min` sweep; defaults to `(0, s_max]`.
    pub s_range: Option<[f64; 2]>,
    pub count: usize,
}

impl Default for SecondVarConfig {
    fn default() -> Self {
        SecondVarConfig {
            foot: 0.0,
            s_range: None,
            count: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    /// Random samples for metric and gradient checks.
    pub samples: usize,
    /// Random regular points for the reconstruction check.
    pub reconstruction_points: usize,
    /// Normal rays checked for monotone ownership.
    pub rays: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            samples: 100,
            reconstruction_points: 500,
            rays: 8,
        }
    }
}

fn default_h_fd() -> f64 {
    1e-4
}

fn default_step() -> f64 {
    1e-3
}

fn default_nodes() -> usize {
    256
}

fn default_fan_rays() -> usize {
    1024
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub metric: MetricConfig,
    pub boundary: BoundaryConfig,
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
    pub h_grid: f64,
    #[serde(default = "default_h_fd")]
    pub h_fd: f64,
    #[serde(default = "default_step")]
    pub step_ode: f64,
    #[serde(default = "default_nodes")]
    pub n_secondvar: usize,
    pub s_max: f64,
    #[serde(default = "default_fan_rays")]
    pub fan_rays: usize,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default)]
    pub conjugate: ConjugateConfig,
    #[serde(default)]
    pub secondvar: SecondVarConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |what: &str| Err(CliError::Config(what.to_string()));
        for (name, x) in [
            ("h_grid", self.h_grid),
            ("h_fd", self.h_fd),
            ("step_ode", self.step_ode),
            ("s_max", self.s_max),
            ("oracle.h", self.oracle.h),
        ] {
            if !(x > 0.0 && x.is_finite()) {
                return bad(&format!("{name} must be positive"));
            }
        }
        let t = serde_json::to_value(&self.tolerances).expect("tolerances serialise");
        for (k, v) in t.as_object().expect("object") {
            if !(v.as_f64().is_some_and(|x| x > 0.0)) {
                return bad(&format!("tolerances.{k} must be positive"));
            }
        }
        let [x0, x1, y0, y1] = self.bbox;
        if !(x1 > x0 && y1 > y0) {
            return bad("box must be [xmin, xmax, ymin, ymax] with xmin < xmax, ymin < ymax");
        }
        if self.n_secondvar < 2
            || self.fan_rays < 16
            || self.oracle.r < 2
            || self.conjugate.samples == 0
        {
            return bad("n_secondvar >= 2, fan_rays >= 16, oracle.r >= 2 and conjugate.samples >= 1 required");
        }
        let curve = self.boundary.build()?;
        let hits = (0..=16)
            .flat_map(|j| (0..=16).map(move |i| (i, j)))
            .any(|(i, j)| {
                let p = Vector2::new(
                    x0 + (x1 - x0) * i as f64 / 16.0,
                    y0 + (y1 - y0) * j as f64 / 16.0,
                );
                curve.contains(&p)
            });
        if !hits {
            return bad("box does not intersect the interior of the boundary");
        }
        self.metric.build()?;
        Ok(())
    }
}
