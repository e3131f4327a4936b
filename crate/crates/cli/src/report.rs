//! Machine-readable check records and deterministic output files.

use std::fs;
use std::io::Write;
use std::path::Path;

use finsler_core::field::{DistanceField, PointClass};
use finsler_core::format_sig;
use serde::{Serialize, Serializer};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Pass,
    Fail,
    GatedSkip,
    NotApplicable,
}

impl Status {
    pub fn label(self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::GatedSkip => "gated-skip",
            Status::NotApplicable => "not-applicable",
        }
    }
}

/// Rounds to 12 significant digits so that reports print identically.
pub fn sig(x: f64) -> f64 {
    if x.is_finite() {
        format_sig(x).parse().expect("formatted float")
    } else {
        x
    }
}

fn ser_sig<S: Serializer>(x: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match x {
        Some(v) if v.is_finite() => s.serialize_f64(sig(*v)),
        _ => s.serialize_none(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Comparison {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">=")]
    AtLeast,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    /// The identity or property being checked.
    pub anchor: &'static str,
    pub status: Status,
    #[serde(serialize_with = "ser_sig")]
    pub measured: Option<f64>,
    #[serde(serialize_with = "ser_sig")]
    pub tolerance: Option<f64>,
    pub comparison: Comparison,
    #[serde(skip_serializing_if = "String::is_empty")]
    pub note: String,
}

impl Check {
    /// Pass/fail from `measured` against `tolerance`.
    pub fn measured(
        name: &'static str,
        anchor: &'static str,
        measured: f64,
        tolerance: f64,
    ) -> Self {
        let status = if measured <= tolerance {
            Status::Pass
        } else {
            Status::Fail
        };
        Check {
            name,
            anchor,
            status,
            measured: Some(measured),
            tolerance: Some(tolerance),
            comparison: Comparison::AtMost,
            note: String::new(),
        }
    }

    /// Pass when `measured >= bound`.
    pub fn at_least(name: &'static str, anchor: &'static str, measured: f64, bound: f64) -> Self {
        let status = if measured >= bound {
            Status::Pass
        } else {
            Status::Fail
        };
        Check {
            comparison: Comparison::AtLeast,
            status,
            ..Check::measured(name, anchor, measured, bound)
        }
    }

    pub fn skipped(
        name: &'static str,
        anchor: &'static str,
        status: Status,
        note: impl Into<String>,
    ) -> Self {
        Check {
            name,
            anchor,
            status,
            measured: None,
            tolerance: None,
            comparison: Comparison::AtMost,
            note: note.into(),
        }
    }

    pub fn failed(name: &'static str, anchor: &'static str, note: impl Into<String>) -> Self {
        Check::skipped(name, anchor, Status::Fail, note)
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = note.into();
        self
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("report serialises");
    text.push('\n');
    write_file(path, text.as_bytes())
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let mut f = fs::File::create(path).map_err(|e| CliError::Io(path.display().to_string(), e))?;
    f.write_all(bytes)
        .map_err(|e| CliError::Io(path.display().to_string(), e))
}

/// Fixed-width table of checks.
pub fn summary_table(title: &str, checks: &[Check]) -> String {
    let width = checks
        .iter()
        .map(|c| c.name.len())
        .max()
        .unwrap_or(4)
        .max(5);
    let mut out = format!(
        "{title}\n\n{:<width$}  {:<14}  {:>20}  {:>20}\n",
        "check", "status", "measured", "tolerance"
    );
    let fmt = |x: Option<f64>| x.map_or("-".to_string(), format_sig);
    for c in checks {
        let tol = match (c.tolerance, c.comparison) {
            (Some(t), Comparison::AtLeast) => format!(">= {}", format_sig(t)),
            (t, _) => fmt(t),
        };
        out.push_str(&format!(
            "{:<width$}  {:<14}  {:>20}  {:>20}\n",
            c.name,
            c.status.label(),
            fmt(c.measured),
            tol
        ));
    }
    let failed = checks.iter().filter(|c| c.status == Status::Fail).count();
    out.push_str(&format!("\n{} checks, {} failed\n", checks.len(), failed));
    out
}

fn opt(x: Option<f64>) -> String {
    x.map_or(String::new(), format_sig)
}

/// One row per grid point: `x, y, d, class, foot_u, s`.
pub fn field_csv(field: &DistanceField, only: Option<&[PointClass]>) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Csv(e.to_string());
    w.write_record(["x", "y", "d", "class", "foot_u", "s"])
        .map_err(io)?;
    for p in &field.points {
        if only.is_some_and(|keep| !keep.contains(&p.class)) {
            continue;
        }
        let foot = p.feet.first();
        w.write_record([
            format_sig(p.x.x),
            format_sig(p.x.y),
            opt(foot.map(|f| f.d)),
            p.class.label().to_string(),
            opt(foot.map(|f| f.foot_u)),
            opt(foot.map(|f| f.d)),
        ])
        .map_err(io)?;
    }
    w.into_inner().map_err(|e| CliError::Csv(e.to_string()))
}

/// Binary PPM of the classification, top row at the largest `y`.
pub fn class_ppm(field: &DistanceField) -> Vec<u8> {
    let g = field.grid;
    let mut out = format!("P6\n{} {}\n255\n", g.nx, g.ny).into_bytes();
    for j in (0..g.ny).rev() {
        for i in 0..g.nx {
            out.extend_from_slice(&field.at(i, j).class.color());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_is_stable() {
        assert_eq!(sig(0.1 + 0.2), 0.3);
        assert_eq!(sig(1.0 / 3.0).to_string(), "0.333333333333");
    }

    #[test]
    fn check_statuses() {
        assert_eq!(Check::measured("a", "", 1e-12, 1e-10).status, Status::Pass);
        assert_eq!(Check::measured("a", "", 1e-9, 1e-10).status, Status::Fail);
        assert_eq!(
            Check::measured("a", "", f64::NAN, 1e-10).status,
            Status::Fail
        );
        assert_eq!(Check::at_least("a", "", 2.0, 1.0).status, Status::Pass);
        let json =
            serde_json::to_string(&Check::skipped("a", "b", Status::GatedSkip, "x")).unwrap();
        assert!(json.contains("\"gated-skip\""), "{json}");
    }
}
