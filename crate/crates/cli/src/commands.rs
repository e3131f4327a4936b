//! `field`, `cutlocus`, `conjugate` and `secondvar`.

use std::collections::BTreeMap;

use finsler_core::field::{
    compute_field, DistanceField, FieldOptions, GridSpec, Locator, PointClass,
};
use finsler_core::format_sig;
use finsler_core::jacobi::conjugate_distance;
use finsler_core::metric::{check_special_form, Framed};
use finsler_core::second_variation::{degeneracy_identity_check, lambda_min_at, GATE_TOL};
use finsler_core::Error;
use rayon::prelude::*;
use serde::Serialize;

use crate::report::{
    class_ppm, field_csv, sig, summary_table, write_file, write_json, Check, Status,
};
use crate::{CliError, Context};

pub const NORMALISATION: &str = "d is the unnormalised Finsler arclength s from the boundary; the unit-normalised geodesic parameter is t = 1 - s";

pub fn field_options(ctx: &Context) -> FieldOptions {
    FieldOptions {
        fan_rays: ctx.config.fan_rays,
        ode_step: ctx.config.step_ode,
        ..FieldOptions::default()
    }
}

pub fn build_field<'a>(
    ctx: &'a Context,
) -> Result<(Locator<'a, finsler_core::metric::MetricSpec>, DistanceField), CliError> {
    let loc = Locator::new(&ctx.metric, &ctx.curve, field_options(ctx))?;
    let grid = GridSpec::from_box(ctx.config.bbox, ctx.config.h_grid)?;
    let field = compute_field(&loc, grid);
    Ok((loc, field))
}

#[derive(Serialize)]
struct GridOut {
    x0: f64,
    y0: f64,
    h: f64,
    nx: usize,
    ny: usize,
}

#[derive(Serialize)]
struct Extent {
    xmin: f64,
    xmax: f64,
    ymin: f64,
    ymax: f64,
}

#[derive(Serialize)]
struct FieldReport {
    command: &'static str,
    grid: GridOut,
    unresolved_fraction: f64,
    low_confidence: bool,
    cut_point_count: usize,
    beyond_conjugate_count: usize,
    min_conjugate_distance: Option<f64>,
    class_counts: BTreeMap<&'static str, usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cut_extent: Option<Extent>,
    distance_normalisation: &'static str,
}

const CLASSES: [PointClass; 6] = [
    PointClass::Regular,
    PointClass::Cut,
    PointClass::BeyondConjugate,
    PointClass::BoundaryBand,
    PointClass::Outside,
    PointClass::Unresolved,
];

fn field_report(command: &'static str, field: &DistanceField, with_extent: bool) -> FieldReport {
    let g = field.grid;
    let cut: Vec<_> = field
        .points
        .iter()
        .filter(|p| p.class == PointClass::Cut)
        .map(|p| p.x)
        .collect();
    let cut_extent = (with_extent && !cut.is_empty()).then(|| Extent {
        xmin: sig(cut.iter().map(|x| x.x).fold(f64::INFINITY, f64::min)),
        xmax: sig(cut.iter().map(|x| x.x).fold(f64::NEG_INFINITY, f64::max)),
        ymin: sig(cut.iter().map(|x| x.y).fold(f64::INFINITY, f64::min)),
        ymax: sig(cut.iter().map(|x| x.y).fold(f64::NEG_INFINITY, f64::max)),
    });
    FieldReport {
        command,
        grid: GridOut {
            x0: sig(g.x0),
            y0: sig(g.y0),
            h: sig(g.h),
            nx: g.nx,
            ny: g.ny,
        },
        unresolved_fraction: sig(field.unresolved_fraction()),
        low_confidence: field.low_confidence(),
        cut_point_count: field.count(PointClass::Cut),
        beyond_conjugate_count: field.count(PointClass::BeyondConjugate),
        min_conjugate_distance: field.min_conjugate_distance.map(sig),
        class_counts: CLASSES
            .iter()
            .map(|c| (c.label(), field.count(*c)))
            .collect(),
        cut_extent,
        distance_normalisation: NORMALISATION,
    }
}

fn field_summary(r: &FieldReport) -> String {
    let mut s = format!(
        "{}: {} x {} grid, h = {}\n\n",
        r.command,
        r.grid.nx,
        r.grid.ny,
        format_sig(r.grid.h)
    );
    for (k, v) in &r.class_counts {
        s.push_str(&format!("{k:<18}{v:>10}\n"));
    }
    s.push_str(&format!(
        "\nunresolved fraction   {}{}\n",
        format_sig(r.unresolved_fraction),
        if r.low_confidence {
            " (low confidence)"
        } else {
            ""
        }
    ));
    s.push_str(&format!(
        "min conjugate dist.   {}\n",
        r.min_conjugate_distance.map_or("none".into(), format_sig)
    ));
    if let Some(e) = &r.cut_extent {
        s.push_str(&format!(
            "cut extent            x in [{}, {}], y in [{}, {}]\n",
            format_sig(e.xmin),
            format_sig(e.xmax),
            format_sig(e.ymin),
            format_sig(e.ymax)
        ));
    }
    s
}

pub fn field(ctx: &Context) -> Result<i32, CliError> {
    let (_, field) = build_field(ctx)?;
    write_file(&ctx.out.join("field.csv"), &field_csv(&field, None)?)?;
    write_file(&ctx.out.join("class.ppm"), &class_ppm(&field))?;
    let r = field_report("field", &field, false);
    write_json(&ctx.out.join("report.json"), &r)?;
    write_file(&ctx.out.join("summary.txt"), field_summary(&r).as_bytes())?;
    Ok(0)
}

pub fn cutlocus(ctx: &Context) -> Result<i32, CliError> {
    let (_, field) = build_field(ctx)?;
    let singular = [PointClass::Cut, PointClass::BeyondConjugate];
    write_file(
        &ctx.out.join("cutlocus.csv"),
        &field_csv(&field, Some(&singular))?,
    )?;
    write_file(&ctx.out.join("class.ppm"), &class_ppm(&field))?;
    let r = field_report("cutlocus", &field, true);
    write_json(&ctx.out.join("report.json"), &r)?;
    write_file(&ctx.out.join("summary.txt"), field_summary(&r).as_bytes())?;
    Ok(0)
}

#[derive(Serialize)]
struct ConjugateReport {
    command: &'static str,
    samples: usize,
    s_max: f64,
    with_conjugate_point: usize,
    min_s_star: Option<f64>,
    min_at_u: Option<f64>,
    min_at_point: Option<[f64; 2]>,
}

pub fn conjugate(ctx: &Context) -> Result<i32, CliError> {
    let n = ctx.config.conjugate.samples;
    let s_max = ctx.config.s_max;
    let rows: Vec<(f64, Option<f64>)> = (0..n)
        .into_par_iter()
        .map(|k| {
            let u = k as f64 / n as f64;
            Ok((u, conjugate_distance(&ctx.metric, &ctx.curve, &[u], s_max)?))
        })
        .collect::<Result<_, CliError>>()?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Csv(e.to_string());
    w.write_record(["u", "x", "y", "s_star"]).map_err(io)?;
    for (u, s) in &rows {
        let p = ctx.curve.point(*u);
        w.write_record([
            format_sig(*u),
            format_sig(p.x),
            format_sig(p.y),
            s.map_or(String::new(), format_sig),
        ])
        .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Csv(e.to_string()))?;
    write_file(&ctx.out.join("conjugate.csv"), &bytes)?;

    let best = rows
        .iter()
        .filter_map(|(u, s)| s.map(|s| (*u, s)))
        .min_by(|a, b| a.1.total_cmp(&b.1));
    let r = ConjugateReport {
        command: "conjugate",
        samples: n,
        s_max: sig(s_max),
        with_conjugate_point: rows.iter().filter(|r| r.1.is_some()).count(),
        min_s_star: best.map(|b| sig(b.1)),
        min_at_u: best.map(|b| sig(b.0)),
        min_at_point: best.map(|b| {
            let p = ctx.curve.point(b.0);
            [sig(p.x), sig(p.y)]
        }),
    };
    write_json(&ctx.out.join("report.json"), &r)?;
    let summary = format!(
        "conjugate sweep: {} boundary samples, s_max = {}\n{} with a conjugate point\nmin s* = {}{}\n",
        n,
        format_sig(s_max),
        r.with_conjugate_point,
        r.min_s_star.map_or("none".into(), format_sig),
        r.min_at_point
            .map_or(String::new(), |p| format!(" at ({}, {})", format_sig(p[0]), format_sig(p[1])))
    );
    write_file(&ctx.out.join("summary.txt"), summary.as_bytes())?;
    Ok(0)
}

pub const DEGENERACY_ANCHOR: &str =
    "J[ζ] = D²f(0')ζ(0)ζ(0) for the Jacobi field vanishing at the conjugate point";

/// Degeneracy identity at the configured foot, as a check record.
pub fn degeneracy_check(ctx: &Context) -> Check {
    let name = "degeneracy_identity";
    let patch = ctx.curve.adapted_chart(ctx.config.secondvar.foot);
    match degeneracy_identity_check(
        &ctx.metric,
        &patch,
        ctx.config.s_max,
        ctx.config.n_secondvar,
    ) {
        Ok(r) => Check::measured(
            name,
            DEGENERACY_ANCHOR,
            r.relative_error,
            ctx.config.tolerances.degeneracy,
        )
        .with_note(format!(
            "s* = {}, J = {}, boundary term = {}",
            format_sig(r.s_star),
            format_sig(r.j_value),
            format_sig(r.boundary_value)
        )),
        Err(Error::GateFailed { violation }) => Check::skipped(
            name,
            DEGENERACY_ANCHOR,
            Status::GatedSkip,
            format!(
                "metric not in special form at the foot (violation {})",
                format_sig(violation)
            ),
        ),
        Err(Error::NotApplicable(m)) => {
            Check::skipped(name, DEGENERACY_ANCHOR, Status::NotApplicable, m)
        }
        Err(e) => Check::failed(name, DEGENERACY_ANCHOR, e.to_string()),
    }
}

#[derive(Serialize)]
struct SecondVarReport {
    command: &'static str,
    foot_u: f64,
    nodes: usize,
    gate_passed: bool,
    gate_violation: f64,
    lambda_sign_change: Option<[f64; 2]>,
    checks: Vec<Check>,
}

pub fn secondvar(ctx: &Context) -> Result<i32, CliError> {
    let cfg = &ctx.config;
    let patch = ctx.curve.adapted_chart(cfg.secondvar.foot);
    let [lo, hi] = cfg
        .secondvar
        .s_range
        .unwrap_or([cfg.s_max / cfg.secondvar.count as f64, cfg.s_max]);
    if !(hi > lo && lo > 0.0) {
        return Err(CliError::Config(
            "secondvar.s_range must satisfy 0 < lo < hi".into(),
        ));
    }
    let local = Framed::new(&ctx.metric, *patch.frame());
    let gate = check_special_form::<2, _>(&local, hi, GATE_TOL)?;
    let count = cfg.secondvar.count.max(2);
    let rows: Vec<(f64, f64)> = if gate.passes() {
        (0..count)
            .into_par_iter()
            .map(|k| {
                let s = lo + (hi - lo) * k as f64 / (count - 1) as f64;
                Ok((
                    s,
                    lambda_min_at(&ctx.metric, &patch, s, cfg.n_secondvar, cfg.step_ode)?,
                ))
            })
            .collect::<Result<_, CliError>>()?
    } else {
        Vec::new()
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Csv(e.to_string());
    w.write_record(["s_bar", "lambda_min"]).map_err(io)?;
    for (s, l) in &rows {
        w.write_record([format_sig(*s), format_sig(*l)])
            .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Csv(e.to_string()))?;
    write_file(&ctx.out.join("secondvar.csv"), &bytes)?;

    let sign_change = rows
        .windows(2)
        .find(|w| w[0].1 > 0.0 && w[1].1 <= 0.0)
        .map(|w| [sig(w[0].0), sig(w[1].0)]);
    let check = degeneracy_check(ctx);
    let code = i32::from(check.status == Status::Fail);
    let r = SecondVarReport {
        command: "secondvar",
        foot_u: sig(cfg.secondvar.foot),
        nodes: cfg.n_secondvar,
        gate_passed: gate.passes(),
        gate_violation: sig(gate.max_violation()),
        lambda_sign_change: sign_change,
        checks: vec![check],
    };
    write_json(&ctx.out.join("report.json"), &r)?;
    let mut summary = summary_table("second variation", &r.checks);
    if !gate.passes() {
        summary.push_str(
            "special-form gate failed: no lambda_min sweep (use the second-difference oracle)\n",
        );
    }
    write_file(&ctx.out.join("summary.txt"), summary.as_bytes())?;
    Ok(code)
}
