//! The `verify` suite: every identity the library relies on, checked on the
//! configured metric and boundary.

use finsler_core::field::{DistanceField, GridSpec, PointClass};
use finsler_core::format_sig;
use finsler_core::geodesic::shoot_normal;
use finsler_core::jacobi::{conjugate_distance, jacobi_bundle_fd, jacobi_ode, JacobiOptions};
use finsler_core::metric::{
    check_special_form, jet_fd, FdOptions, Framed, Metric, SpecialFormReport,
};
use finsler_core::normal::{curvature_relation, normal_sensitivity, solve_normal};
use finsler_core::oracle::{compare, oracle_distance};
use finsler_core::regularity::{
    gradient_check, jacobian_margin, lipschitz_violation, ray_ownership, regular_with_margin,
    GradientCheck,
};
use finsler_core::second_variation::{
    assemble_form_special, lambda_first_zero, lambda_min_at, local_base,
    second_difference_variation, VariationFamily,
};
use finsler_core::Error;
use nalgebra::Vector2;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::commands::{build_field, degeneracy_check, NORMALISATION};
use crate::report::{summary_table, write_file, write_json, Check, Status};
use crate::{CliError, Context, RunConfig};

/// Checks tied to the identities the construction rests on; each appears in
/// every report exactly once.
pub const IDENTITY_CHECKS: [&str; 12] = [
    "euler_homogeneity",
    "normal_system_residual",
    "special_form_gate",
    "geodesic_unit_speed",
    "jacobi_linearisation",
    "curvature_relation",
    "second_variation_vs_oracle",
    "degeneracy_identity",
    "conjugate_vs_lambda_zero",
    "foot_inversion_residual",
    "gradient_legendre",
    "oracle_comparison",
];

/// Every check name, in report order.
pub const ALL_CHECKS: [&str; 21] = [
    "euler_homogeneity",
    "jet_finite_difference",
    "normal_system_residual",
    "special_form_gate",
    "geodesic_unit_speed",
    "jacobi_linearisation",
    "curvature_relation",
    "second_variation_vs_oracle",
    "degeneracy_identity",
    "conjugate_vs_lambda_zero",
    "lambda_sign_pattern",
    "field_resolved",
    "foot_inversion_residual",
    "reconstruction",
    "gradient_legendre",
    "directional_derivative",
    "hessian_refinement",
    "jacobian_nonsingular",
    "lipschitz",
    "ray_monotonicity",
    "oracle_comparison",
];

const RANDOM_FAMILIES: usize = 20;
const SIGN_SAMPLES: usize = 10;
const FAMILY_NODES: usize = 64;

type Outcome = Result<Check, Error>;

fn settle(name: &'static str, anchor: &'static str, r: Outcome) -> Check {
    match r {
        Ok(c) => c,
        Err(Error::NotApplicable(m)) => Check::skipped(name, anchor, Status::NotApplicable, m),
        Err(Error::GateFailed { violation }) => Check::skipped(
            name,
            anchor,
            Status::GatedSkip,
            format!(
                "special-form gate failed (violation {})",
                format_sig(violation)
            ),
        ),
        Err(e) => Check::failed(name, anchor, e.to_string()),
    }
}

fn gated(
    name: &'static str,
    anchor: &'static str,
    gate: &Option<SpecialFormReport>,
) -> Option<Check> {
    match gate {
        Some(g) if g.passes() => None,
        Some(g) => Some(Check::skipped(
            name,
            anchor,
            Status::GatedSkip,
            format!(
                "special-form gate failed (violation {})",
                format_sig(g.max_violation())
            ),
        )),
        None => Some(Check::failed(
            name,
            anchor,
            "special-form gate could not be evaluated",
        )),
    }
}

fn interior_point(ctx: &Context, rng: &mut ChaCha8Rng) -> Vector2<f64> {
    let [x0, x1, y0, y1] = ctx.config.bbox;
    loop {
        let p = Vector2::new(rng.random_range(x0..x1), rng.random_range(y0..y1));
        if ctx.curve.contains(&p) {
            return p;
        }
    }
}

fn random_direction(rng: &mut ChaCha8Rng) -> Vector2<f64> {
    let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let r: f64 = rng.random_range(0.2..2.0);
    Vector2::new(r * a.cos(), r * a.sin())
}

fn family(rng: &mut ChaCha8Rng, s_bar: f64) -> Result<VariationFamily, Error> {
    let c: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
    VariationFamily::from_fn(s_bar, FAMILY_NODES, 1, |t| {
        let r = t / s_bar;
        let mut z = c[0];
        for (k, ck) in c.iter().enumerate().skip(1) {
            z += ck * (k as f64 * std::f64::consts::PI * r).sin();
        }
        vec![(1.0 - r) * z]
    })
}

fn boundary_params(n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |k| k as f64 / n as f64)
}

struct Suite<'a> {
    ctx: &'a Context,
    rng: ChaCha8Rng,
    checks: Vec<Check>,
}

impl<'a> Suite<'a> {
    fn cfg(&self) -> &'a RunConfig {
        &self.ctx.config
    }

    fn push(&mut self, c: Check) {
        self.checks.push(c);
    }

    fn metric_checks(&mut self) {
        let ctx = self.ctx;
        let n = self.cfg().verify.samples;
        let pts: Vec<_> = (0..n)
            .map(|_| {
                (
                    interior_point(ctx, &mut self.rng),
                    random_direction(&mut self.rng),
                )
            })
            .collect();
        let tol = &self.cfg().tolerances;
        let euler = pts.iter().try_fold(0.0f64, |acc, (x, v)| {
            Ok::<_, Error>(acc.max(ctx.metric.jet(x, v)?.euler_violation(v)))
        });
        let c = euler.map(|m| {
            Check::measured(
                "euler_homogeneity",
                "φ_v·v = φ, φ_vv v = 0, φ_ξv v = φ_ξ",
                m,
                tol.euler,
            )
        });
        self.push(settle(
            "euler_homogeneity",
            "φ_v·v = φ, φ_vv v = 0, φ_ξv v = φ_ξ",
            c,
        ));

        let fd = pts.iter().try_fold(0.0f64, |acc, (x, v)| {
            let a = ctx.metric.jet(x, v)?;
            let b = jet_fd::<2, _>(&ctx.metric, x, v, FdOptions::default())?;
            Ok::<_, Error>(acc.max(a.max_difference(&b)))
        });
        let anchor = "analytic jet against central differences of φ";
        let c = fd.map(|m| Check::measured("jet_finite_difference", anchor, m, tol.jet_fd));
        self.push(settle("jet_finite_difference", anchor, c));
    }

    fn normal_checks(&mut self) {
        let ctx = self.ctx;
        let anchor = "φ(y; V) = 1 and ∇_vφ(y; V) ⊥ T_y∂Ω";
        let r = boundary_params(2 * self.cfg().verify.samples).try_fold(0.0f64, |acc, u| {
            Ok::<_, Error>(acc.max(solve_normal(&ctx.metric, &ctx.curve, &[u])?.residual))
        });
        let c = r.map(|m| {
            Check::measured(
                "normal_system_residual",
                anchor,
                m,
                self.cfg().tolerances.normal_residual,
            )
        });
        self.push(settle("normal_system_residual", anchor, c));
    }

    fn gate(&mut self) -> Option<SpecialFormReport> {
        let ctx = self.ctx;
        let anchor = "special coordinate form along the normal axis";
        let patch = ctx.curve.adapted_chart(self.cfg().secondvar.foot);
        let local = Framed::new(&ctx.metric, *patch.frame());
        let tol = self.cfg().tolerances.special_form;
        match check_special_form::<2, _>(&local, self.cfg().s_max, tol) {
            Ok(g) => {
                let c = Check::measured("special_form_gate", anchor, g.max_violation(), tol);
                let c = if g.passes() {
                    c
                } else {
                    Check {
                        status: Status::GatedSkip,
                        ..c
                    }
                    .with_note("gated checks fall back to the second-difference oracle")
                };
                self.push(c);
                Some(g)
            }
            Err(e) => {
                self.push(Check::failed("special_form_gate", anchor, e.to_string()));
                None
            }
        }
    }

    fn geodesic_checks(&mut self) {
        let ctx = self.ctx;
        let cfg = self.cfg();
        let anchor = "φ(ξ; ξ̇) = 1 along normal geodesics";
        let r = boundary_params(cfg.verify.rays).try_fold(0.0f64, |acc, u| {
            let t = shoot_normal(&ctx.metric, &ctx.curve, &[u], cfg.s_max, cfg.step_ode, None)?;
            Ok::<_, Error>(acc.max(t.unit_speed_drift(&ctx.metric)? / t.final_time().max(1.0)))
        });
        let c =
            r.map(|m| Check::measured("geodesic_unit_speed", anchor, m, cfg.tolerances.unit_speed));
        self.push(settle("geodesic_unit_speed", anchor, c));

        let anchor = "finite-difference Jacobi fields solve the linearised geodesic equation";
        let len = cfg.s_max.min(1.0);
        let r = boundary_params(cfg.verify.rays).try_fold(0.0f64, |acc, u| {
            let patch = ctx.curve.adapted_chart(u);
            let opts = JacobiOptions {
                step: cfg.step_ode,
                ..JacobiOptions::default()
            };
            let b = jacobi_bundle_fd(&ctx.metric, &patch, &[0.0], len, opts)?;
            let bp = finsler_core::boundary::BoundaryChart::boundary_point(&patch, &[0.0])?;
            let dv = normal_sensitivity(&ctx.metric, &patch, &[0.0], 0.0)?
                .dv
                .expect("sensitivity computed");
            let ode = jacobi_ode(&ctx.metric, &b.base, bp.tangents[0], dv[0])?;
            let err = ode
                .zeta
                .iter()
                .zip(&b.fields[0].zeta)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            Ok::<_, Error>(acc.max(err))
        });
        let c = r.map(|m| {
            Check::measured(
                "jacobi_linearisation",
                anchor,
                m,
                cfg.tolerances.jacobi_agreement,
            )
        });
        self.push(settle("jacobi_linearisation", anchor, c));
    }

    fn variation_checks(&mut self, gate: &Option<SpecialFormReport>) {
        let ctx = self.ctx;
        let cfg = self.cfg();
        let tol = &cfg.tolerances;
        let foot = cfg.secondvar.foot;
        let patch = ctx.curve.adapted_chart(foot);

        let anchor = "φ_v'v'(0'; e_n) ∇V'(0') + D²f(0') = 0";
        let c = gated("curvature_relation", anchor, gate).unwrap_or_else(|| {
            let r = curvature_relation(&ctx.metric, &patch).map(|rel| {
                Check::measured(
                    "curvature_relation",
                    anchor,
                    rel.residual(),
                    tol.curvature_relation,
                )
            });
            settle("curvature_relation", anchor, r)
        });
        self.push(c);

        let s_star = conjugate_distance(&ctx.metric, &ctx.curve, &[foot], cfg.s_max);

        let anchor = "assembled second variation against d²/dε² of the perturbed length";
        let c = gated("second_variation_vs_oracle", anchor, gate).unwrap_or_else(|| {
            let r = (|| {
                let s_bar = match &s_star {
                    Ok(Some(s)) => 0.7 * s,
                    _ => 0.5 * cfg.s_max,
                };
                let base = local_base(&ctx.metric, &patch, s_bar, cfg.step_ode)?;
                let form = assemble_form_special(&ctx.metric, &patch, &base, s_bar, FAMILY_NODES)?;
                let mut worst = 0.0f64;
                for _ in 0..RANDOM_FAMILIES {
                    let fam = family(&mut self.rng, s_bar)?;
                    let q = form.eval(&fam);
                    let d2 = second_difference_variation(&ctx.metric, &patch, &fam, &base, 1e-2)?;
                    worst = worst.max((q - d2).abs() / d2.abs().max(1e-3));
                }
                Ok(Check::measured(
                    "second_variation_vs_oracle",
                    anchor,
                    worst,
                    tol.second_variation,
                )
                .with_note(format!(
                    "{RANDOM_FAMILIES} random variations at s = {}",
                    format_sig(s_bar)
                )))
            })();
            settle("second_variation_vs_oracle", anchor, r)
        });
        self.push(c);

        self.push(degeneracy_check(ctx));

        let anchor = "first zero of det M equals first zero of λ_min(Q)";
        let sign_anchor = "λ_min(Q) > 0 before the conjugate point and < 0 after";
        if let (Some(a), Some(b)) = (
            gated("conjugate_vs_lambda_zero", anchor, gate),
            gated("lambda_sign_pattern", sign_anchor, gate),
        ) {
            self.push(a);
            self.push(b);
            return;
        }
        let s = match s_star {
            Ok(Some(s)) => s,
            Ok(None) => {
                let note = format!("no conjugate point below s = {}", format_sig(cfg.s_max));
                self.push(Check::skipped(
                    "conjugate_vs_lambda_zero",
                    anchor,
                    Status::NotApplicable,
                    note.clone(),
                ));
                self.push(Check::skipped(
                    "lambda_sign_pattern",
                    sign_anchor,
                    Status::NotApplicable,
                    note,
                ));
                return;
            }
            Err(e) => {
                self.push(Check::failed(
                    "conjugate_vs_lambda_zero",
                    anchor,
                    e.to_string(),
                ));
                self.push(Check::failed(
                    "lambda_sign_pattern",
                    sign_anchor,
                    e.to_string(),
                ));
                return;
            }
        };
        let hi = (1.5 * s).min(cfg.s_max);
        let n = cfg.n_secondvar;
        let r = lambda_first_zero(&ctx.metric, &patch, 0.5 * s, hi, n, 1e-5).and_then(|z| {
            let z = z.ok_or(Error::NoConvergence {
                what: "λ_min zero bracket",
                iterations: 0,
                residual: f64::NAN,
            })?;
            Ok(Check::measured(
                "conjugate_vs_lambda_zero",
                anchor,
                (z - s).abs(),
                tol.lambda_zero,
            )
            .with_note(format!(
                "s* = {}, λ_min zero = {}",
                format_sig(s),
                format_sig(z)
            )))
        });
        self.push(settle("conjugate_vs_lambda_zero", anchor, r));

        let before = (1..=SIGN_SAMPLES).map(|k| (s * k as f64 / (SIGN_SAMPLES + 1) as f64, true));
        let after =
            (1..=SIGN_SAMPLES).map(|k| (s + (hi - s) * k as f64 / SIGN_SAMPLES as f64, false));
        let r = before.chain(after).try_fold(0usize, |bad, (sb, positive)| {
            let l = lambda_min_at(&ctx.metric, &patch, sb, n, cfg.step_ode)?;
            let ok = if positive { l > 0.0 } else { l < 0.0 };
            Ok::<_, Error>(bad + usize::from(!ok))
        });
        let r = r.map(|bad| {
            Check::measured("lambda_sign_pattern", sign_anchor, bad as f64, 0.0).with_note(format!(
                "{SIGN_SAMPLES} samples either side of s*; measured = wrong signs"
            ))
        });
        self.push(settle("lambda_sign_pattern", sign_anchor, r));
    }

    fn field_checks(&mut self) -> Result<(), CliError> {
        let ctx = self.ctx;
        let cfg = self.cfg();
        let tol = &cfg.tolerances;
        let (loc, field) = build_field(ctx)?;

        let c = Check::measured(
            "field_resolved",
            "Newton inversion converges at every classified grid point",
            field.unresolved_fraction(),
            0.01,
        )
        .with_note(format!(
            "{} unresolved points",
            field.count(PointClass::Unresolved)
        ));
        self.push(c);

        let regular: Vec<_> = field
            .points
            .iter()
            .filter(|p| p.class == PointClass::Regular)
            .collect();
        let (res, iters) = regular
            .iter()
            .map(|p| (p.feet[0].residual, p.feet[0].newton_iters))
            .fold((0.0f64, 0usize), |(r, i), (a, b)| (r.max(a), i.max(b)));
        let anchor = "η(σ', X, s) = boundary point at the foot";
        let c = if regular.is_empty() {
            Check::failed("foot_inversion_residual", anchor, "no REGULAR grid points")
        } else {
            Check::measured("foot_inversion_residual", anchor, res, tol.newton_residual).with_note(
                format!(
                    "{} regular points, at most {iters} Newton iterations",
                    regular.len()
                ),
            )
        };
        self.push(c);

        let anchor = "shooting forward from the foot for length d lands at X";
        let k = cfg.verify.reconstruction_points.min(regular.len());
        let mut idx = sample(&mut self.rng, regular.len(), k).into_vec();
        idx.sort_unstable();
        let r = idx.iter().try_fold(0.0f64, |acc, &i| {
            let p = regular[i];
            Ok::<_, Error>(acc.max(loc.reconstruction_error(&p.x, &p.feet[0])?))
        });
        let r = r.map(|m| {
            Check::measured("reconstruction", anchor, m, tol.reconstruction)
                .with_note(format!("{k} random regular points"))
        });
        self.push(settle("reconstruction", anchor, r));

        self.regularity_checks(&loc, &field);

        let anchor = "d(y) ≤ d(x) + φ(x; y − x) between lattice neighbours";
        let r = lipschitz_violation(&field, &ctx.metric)
            .map(|m| Check::measured("lipschitz", anchor, m, tol.lipschitz));
        self.push(settle("lipschitz", anchor, r));

        let anchor = "points on a normal ray stop being regular once and for all";
        let rays = cfg.verify.rays.max(1);
        let r = boundary_params(rays).try_fold(0usize, |bad, u| {
            Ok::<_, Error>(
                bad + usize::from(!ray_ownership(&loc, u, cfg.h_grid, cfg.s_max)?.is_monotone()),
            )
        });
        let r = r.map(|bad| {
            Check::measured("ray_monotonicity", anchor, bad as f64, 0.0)
                .with_note(format!("{rays} rays; measured = rays with interleaving"))
        });
        self.push(settle("ray_monotonicity", anchor, r));

        let anchor = "field against the wide-stencil Dijkstra oracle";
        let r = GridSpec::from_box(cfg.bbox, cfg.oracle.h)
            .and_then(|g| oracle_distance(&ctx.metric, &ctx.curve, g, cfg.oracle.r))
            .map(|o| {
                let cmp = compare(&field, &o, 1.0, tol.oracle);
                let c = Check::measured("oracle_comparison", anchor, cmp.max_abs, tol.oracle)
                    .with_note(format!(
                        "{} points, mean {}, {} flagged, {} disconnected nodes",
                        cmp.compared,
                        format_sig(cmp.mean_abs),
                        cmp.flagged,
                        o.disconnected
                    ));
                if cmp.passes() {
                    c
                } else {
                    Check {
                        status: Status::Fail,
                        ..c
                    }
                }
            });
        self.push(settle("oracle_comparison", anchor, r));
        Ok(())
    }

    fn regularity_checks<M: Metric<2>>(
        &mut self,
        loc: &finsler_core::field::Locator<'_, M>,
        field: &DistanceField,
    ) {
        let cfg = self.cfg();
        let tol = &cfg.tolerances;
        let names = [
            ("gradient_legendre", "∇d(X) = ∇_vφ(X; ξ̇)"),
            ("directional_derivative", "derivative of d along ξ̇ equals 1"),
            (
                "hessian_refinement",
                "second differences of d converge at second order",
            ),
            (
                "jacobian_nonsingular",
                "boundary-exponential Jacobian nonsingular on regular points",
            ),
        ];
        let pool = match regular_with_margin(field, loc.metric, 3) {
            Ok(p) => p,
            Err(e) => {
                for (n, a) in names {
                    self.push(Check::failed(n, a, e.to_string()));
                }
                return;
            }
        };
        if pool.is_empty() {
            for (n, a) in names {
                self.push(Check::skipped(
                    n,
                    a,
                    Status::NotApplicable,
                    "no regular points with a 3-cell margin",
                ));
            }
            return;
        }
        let k = cfg.verify.samples.min(pool.len());
        let mut idx = sample(&mut self.rng, pool.len(), k).into_vec();
        idx.sort_unstable();
        let hess_delta = (3.0 * cfg.h_grid).min(0.04);
        let results: Vec<Result<(GradientCheck, f64), Error>> = idx
            .iter()
            .map(|&i| {
                let x = pool[i];
                Ok((
                    gradient_check(loc, &x, cfg.h_fd, hess_delta)?,
                    jacobian_margin(loc, &x)?,
                ))
            })
            .collect();
        let ok: Result<Vec<_>, Error> = results.into_iter().collect();
        let ok = match ok {
            Ok(v) => v,
            Err(e) => {
                for (n, a) in names {
                    self.push(Check::failed(n, a, e.to_string()));
                }
                return;
            }
        };
        let grad = ok.iter().map(|g| g.0.gradient_error).fold(0.0, f64::max);
        let dir = ok
            .iter()
            .map(|g| (g.0.directional - 1.0).abs())
            .fold(0.0, f64::max);
        let ratios: Vec<f64> = ok.iter().filter_map(|g| g.0.hessian_ratio).collect();
        let margin = ok.iter().map(|g| g.1).fold(f64::INFINITY, f64::min);
        let note = format!("{k} regular points at least 3 cells from the singular set");
        self.push(
            Check::measured(names[0].0, names[0].1, grad, tol.gradient).with_note(note.clone()),
        );
        self.push(Check::measured(names[1].0, names[1].1, dir, tol.directional).with_note(note));
        self.push(if ratios.is_empty() {
            Check::skipped(names[2].0, names[2].1, Status::NotApplicable, "second differences flat to noise level")
        } else {
            let worst = ratios.iter().map(|r| (r - 4.0).abs()).fold(0.0, f64::max);
            Check::measured(names[2].0, names[2].1, worst, tol.hessian_ratio).with_note(format!(
                "measured = max |ratio - 4| over {} points; coarsest step {} or a tenth of the focal margin",
                ratios.len(),
                format_sig(hess_delta)
            ))
        });
        self.push(
            Check::at_least(names[3].0, names[3].1, margin, tol.jacobian_margin)
                .with_note("measured = min |det M| / product of column norms"),
        );
    }
}

#[derive(Serialize)]
struct VerifyReport<'a> {
    command: &'static str,
    version: &'static str,
    seed: u64,
    config: &'a RunConfig,
    distance_normalisation: &'static str,
    checks: &'a [Check],
}

/// Runs the suite and writes `report.json` and `summary.txt`; returns 1 when
/// any check fails.
pub fn verify(ctx: &Context) -> Result<i32, CliError> {
    let checks = run_checks(ctx)?;
    let report = VerifyReport {
        command: "verify",
        version: env!("CARGO_PKG_VERSION"),
        seed: ctx.seed,
        config: &ctx.config,
        distance_normalisation: NORMALISATION,
        checks: &checks,
    };
    write_json(&ctx.out.join("report.json"), &report)?;
    write_file(
        &ctx.out.join("summary.txt"),
        summary_table("verify", &checks).as_bytes(),
    )?;
    Ok(i32::from(checks.iter().any(|c| c.status == Status::Fail)))
}

/// All checks in report order.
pub fn run_checks(ctx: &Context) -> Result<Vec<Check>, CliError> {
    let mut suite = Suite {
        ctx,
        rng: ChaCha8Rng::seed_from_u64(ctx.seed),
        checks: Vec::with_capacity(ALL_CHECKS.len()),
    };
    suite.metric_checks();
    suite.normal_checks();
    let gate = suite.gate();
    suite.geodesic_checks();
    suite.variation_checks(&gate);
    suite.field_checks()?;
    debug_assert_eq!(
        suite.checks.iter().map(|c| c.name).collect::<Vec<_>>(),
        ALL_CHECKS
    );
    Ok(suite.checks)
}
