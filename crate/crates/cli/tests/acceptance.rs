//! Acceptance criteria, one pass/fail line each. Run with
//! `cargo test -p finsler-cli --test acceptance`.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use finsler_cli::verify::IDENTITY_CHECKS;
use finsler_core::boundary::{BoundaryChart, Curve};
use finsler_core::field::{compute_field, FieldOptions, GridSpec, Locator, PointClass};
use finsler_core::geodesic::{integrate, shoot_normal, GeodesicState};
use finsler_core::jacobi::{conjugate_distance, jacobi_bundle_fd, jacobi_ode, JacobiOptions};
use finsler_core::metric::{jet_fd, CovectorField, FdOptions, MatrixField, Metric, MetricSpec};
use finsler_core::normal::{normal_residual, normal_sensitivity, solve_normal};
use finsler_core::oracle::{compare, oracle_distance};
use finsler_core::poly::Poly;
use finsler_core::regularity::{
    gradient_check, gradient_jump, jacobian_margin, ray_ownership, regular_with_margin,
};
use finsler_core::second_variation::{degeneracy_identity_check, lambda_first_zero, lambda_min_at};
use nalgebra::{DMatrix, DVector, SymmetricEigen, Vector2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

struct Outcome {
    measured: String,
    tolerance: String,
    pass: bool,
}

fn p(s: &str) -> Poly {
    s.parse().unwrap()
}

fn euclid() -> MetricSpec {
    MetricSpec::euclidean(2).unwrap()
}

fn randers_x(beta: f64) -> MetricSpec {
    MetricSpec::randers_constant(DMatrix::identity(2, 2), vec![beta, 0.0]).unwrap()
}

fn conformal() -> MetricSpec {
    let c = p("1 + 0.1*x1^2");
    MetricSpec::riemannian(
        MatrixField::polynomial(vec![
            vec![c.clone(), Poly::constant(0.0)],
            vec![Poly::constant(0.0), c],
        ])
        .unwrap(),
    )
    .unwrap()
}

fn normalized_randers(beta: f64) -> MetricSpec {
    MetricSpec::randers_constant(
        DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, (1.0 - beta) * (1.0 - beta)])),
        vec![0.0, beta],
    )
    .unwrap()
}

fn disk() -> Curve {
    Curve::circle(Vector2::zeros(), 1.0).unwrap()
}

fn ellipse() -> Curve {
    Curve::ellipse(2.0, 1.0).unwrap()
}

fn line() -> Curve {
    Curve::line(Vector2::zeros(), Vector2::new(1.0, 0.0)).unwrap()
}

fn e(x: f64) -> String {
    format!("{x:.3e}")
}

fn metric_axioms(rng: &mut ChaCha8Rng) -> Outcome {
    let poly_a = || {
        MatrixField::polynomial(vec![
            vec![p("1 + 0.3*x1^2"), p("0.2*x1*x2")],
            vec![p("0.2*x1*x2"), p("2 + 0.1*x2")],
        ])
        .unwrap()
    };
    let variants = [
        euclid(),
        MetricSpec::riemannian(poly_a()).unwrap(),
        MetricSpec::randers_constant(
            DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]),
            vec![0.4, -0.3],
        )
        .unwrap(),
        MetricSpec::randers(
            poly_a(),
            CovectorField::polynomial(vec![p("0.2*x1"), p("0.1 + 0.1*x2^2")]),
        )
        .unwrap(),
    ];
    let (mut euler, mut fd, mut rank_ok) = (0.0f64, 0.0f64, true);
    for m in &variants {
        for _ in 0..100 {
            let xi = Vector2::new(rng.random_range(-0.8..0.8), rng.random_range(-0.8..0.8));
            let th: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let v = rng.random_range(0.5..2.0) * Vector2::new(th.cos(), th.sin());
            let jet = Metric::<2>::jet(m, &xi, &v).unwrap();
            euler = euler.max(jet.euler_violation(&v));
            fd = fd.max(jet.max_difference(&jet_fd(m, &xi, &v, FdOptions::default()).unwrap()));
            let d = DMatrix::from_column_slice(2, 2, jet.d_vv.as_slice());
            let mut eig: Vec<f64> = SymmetricEigen::new(d).eigenvalues.iter().copied().collect();
            eig.sort_by(f64::total_cmp);
            rank_ok &= eig[0].abs() < 1e-9 && eig[1] > 1e-9;
        }
    }
    Outcome {
        measured: format!(
            "euler={} jet_fd={} rank_deficient={rank_ok}",
            e(euler),
            e(fd)
        ),
        tolerance: "euler<=1e-10 jet_fd<=1e-6".into(),
        pass: euler <= 1e-10 && fd <= 1e-6 && rank_ok,
    }
}

fn normal_system(rng: &mut ChaCha8Rng) -> Outcome {
    let metrics = [euclid(), conformal(), randers_x(0.5)];
    let mut worst: f64 = 0.0;
    for m in &metrics {
        for c in [disk(), ellipse()] {
            for _ in 0..200 {
                let u: f64 = rng.random();
                let d = solve_normal(m, &c, &[u]).unwrap();
                let bp = c.boundary_point(&[u]).unwrap();
                worst = worst.max(normal_residual(m, &bp, &d.v).unwrap());
            }
        }
    }
    let d = solve_normal(&randers_x(0.5), &line(), &[0.7]).unwrap();
    let closed = (d.v - Vector2::new(-2.0 / 3.0, 2.0 / 3f64.sqrt())).norm();
    Outcome {
        measured: format!("residual={} half_plane={}", e(worst), e(closed)),
        tolerance: "residual<=1e-12 half_plane<=1e-10".into(),
        pass: worst <= 1e-12 && closed <= 1e-10,
    }
}

fn geodesic_integrity() -> Outcome {
    let m = conformal();
    let dir = Vector2::new(0.6, 0.8);
    let x0 = Vector2::new(0.5, 0.0);
    let s0 = GeodesicState::new(x0, dir / Metric::<2>::eval(&m, &x0, &dir).unwrap());
    let length = 2.0;
    let drift = integrate(&m, s0, 0.0, 1e-3, 2000, None)
        .unwrap()
        .unit_speed_drift(&m)
        .unwrap()
        / length;

    let mut straight: f64 = 0.0;
    for metric in [euclid(), randers_x(0.5)] {
        let traj = shoot_normal(&metric, &ellipse(), &[0.1], 1.0, 1e-3, None).unwrap();
        let a = traj.states[0].xi;
        let chord = (traj.last().xi - a).normalize();
        for s in &traj.states {
            let w = s.xi - a;
            straight = straight.max((w - chord * chord.dot(&w)).norm());
        }
    }

    let end = |h: f64| {
        integrate(&m, s0, 0.0, h, (2.0 / h).round() as usize, None)
            .unwrap()
            .last()
            .xi
    };
    let reference = end(2e-4);
    let errs: Vec<f64> = [0.2, 0.1, 0.05]
        .iter()
        .map(|&h| (end(h) - reference).norm())
        .collect();
    let order = (errs[1] / errs[2]).log2();
    Outcome {
        measured: format!(
            "drift/len={} straight={} order={order:.3}",
            e(drift),
            e(straight)
        ),
        tolerance: "drift<=1e-8 straight<=1e-10 order>=3.9".into(),
        pass: drift <= 1e-8 && straight <= 1e-10 && order >= 3.9,
    }
}

fn conjugate_distances() -> Outcome {
    let circle = conjugate_distance(&euclid(), &disk(), &[0.0], 1.5).unwrap();
    let vertex = conjugate_distance(&euclid(), &ellipse(), &[0.0], 1.5).unwrap();
    let flat = conjugate_distance(&euclid(), &line(), &[0.2], 5.0).unwrap();
    let ec = circle.map_or(f64::INFINITY, |s| (s - 1.0).abs());
    let ee = vertex.map_or(f64::INFINITY, |s| (s - 0.5).abs());
    Outcome {
        measured: format!("circle_err={} ellipse_err={} line={flat:?}", e(ec), e(ee)),
        tolerance: "1e-5, line none".into(),
        pass: ec <= 1e-5 && ee <= 1e-5 && flat.is_none(),
    }
}

fn jacobi_consistency() -> Outcome {
    let m = conformal();
    let c = Curve::circle(Vector2::new(0.2, 0.0), 1.3).unwrap();
    let mut fd_vs_ode: f64 = 0.0;
    for u in [0.0, 0.3, 0.55, 0.8] {
        let patch = c.adapted_chart(u);
        let b = jacobi_bundle_fd(&m, &patch, &[0.0], 1.0, JacobiOptions::default()).unwrap();
        let bp = patch.boundary_point(&[0.0]).unwrap();
        let dv = normal_sensitivity(&m, &patch, &[0.0], 0.0)
            .unwrap()
            .dv
            .unwrap();
        let ode = jacobi_ode(&m, &b.base, bp.tangents[0], dv[0]).unwrap();
        for (a, z) in ode.zeta.iter().zip(&b.fields[0].zeta) {
            fd_vs_ode = fd_vs_ode.max((a - z).norm());
        }
    }

    // special form: ζ(t) = (1 − t·D²f/A) ζ(0), A = 1/(1 − β)
    let beta = 0.4;
    let m = normalized_randers(beta);
    let patch = Curve::circle(Vector2::new(0.0, 2.0), 2.0)
        .unwrap()
        .adapted_chart(0.75);
    let a = 1.0 / (1.0 - beta);
    let b = jacobi_bundle_fd(&m, &patch, &[0.0], 1.0, JacobiOptions::default()).unwrap();
    let bp = patch.boundary_point(&[0.0]).unwrap();
    let dv = normal_sensitivity(&m, &patch, &[0.0], 0.0)
        .unwrap()
        .dv
        .unwrap();
    let ode = jacobi_ode(&m, &b.base, bp.tangents[0], dv[0]).unwrap();
    let mut closed: f64 = 0.0;
    for ((t, z), o) in b.base.times.iter().zip(&b.fields[0].zeta).zip(&ode.zeta) {
        let exact = 1.0 - t * 0.5 / a;
        closed = closed.max((z.x - exact).abs()).max((o.x - exact).abs());
    }
    Outcome {
        measured: format!("fd_vs_ode={} closed_form={}", e(fd_vs_ode), e(closed)),
        tolerance: "1e-5".into(),
        pass: fd_vs_ode <= 1e-5 && closed <= 1e-5,
    }
}

fn second_variation_equivalence() -> Outcome {
    let m = euclid();
    let mut gap: f64 = 0.0;
    let mut signs_ok = true;
    for (curve, s_max) in [(disk(), 1.5), (ellipse(), 1.0)] {
        let patch = curve.adapted_chart(0.0);
        let det_zero = conjugate_distance(&m, &curve, &[0.0], s_max)
            .unwrap()
            .unwrap();
        let lam_zero = lambda_first_zero(&m, &patch, 0.5 * det_zero, s_max, 256, 1e-5)
            .unwrap()
            .unwrap_or(f64::INFINITY);
        gap = gap.max((lam_zero - det_zero).abs());
        for k in 1..=10 {
            let before = det_zero * (0.05 + 0.09 * k as f64);
            let after = det_zero * (1.0 + 0.045 * k as f64);
            signs_ok &= lambda_min_at(&m, &patch, before, 256, 1e-3).unwrap() > 0.0;
            signs_ok &= lambda_min_at(&m, &patch, after, 256, 1e-3).unwrap() < 0.0;
        }
    }
    Outcome {
        measured: format!("zero_gap={} sign_pattern={signs_ok}", e(gap)),
        tolerance: "2e-3".into(),
        pass: gap <= 2e-3 && signs_ok,
    }
}

fn degeneracy() -> Outcome {
    let m = euclid();
    let c = degeneracy_identity_check(&m, &disk().adapted_chart(0.0), 1.5, 256).unwrap();
    let el = degeneracy_identity_check(&m, &ellipse().adapted_chart(0.0), 1.0, 256).unwrap();
    // J at the vertex of the ellipse is 2·ζ(0)²; the check normalises ζ(0) = 1
    let ellipse_side = (el.boundary_value - 2.0).abs();
    Outcome {
        measured: format!(
            "circle_rel={} ellipse_rel={} ellipse_boundary_side={}",
            e(c.relative_error),
            e(el.relative_error),
            e(el.boundary_value)
        ),
        tolerance: "1e-3".into(),
        pass: c.relative_error <= 1e-3
            && el.relative_error <= 1e-3
            && ellipse_side <= 1e-6
            && (c.boundary_value - 1.0).abs() <= 1e-6,
    }
}

fn foot_inversion(rng: &mut ChaCha8Rng) -> Outcome {
    let (mut residual, mut recon, mut iters) = (0.0f64, 0.0f64, 0usize);
    let mut total = 0;
    for (m, c, bbox) in [
        (euclid(), ellipse(), [-2.0, 2.0, -1.0, 1.0]),
        (randers_x(0.5), disk(), [-1.0, 1.0, -1.0, 1.0]),
    ] {
        let loc = Locator::new(&m, &c, FieldOptions::default()).unwrap();
        let grid = GridSpec::from_box(bbox, 0.02).unwrap();
        let field = compute_field(&loc, grid);
        // continuation seeds: every grid point was solved from a neighbour's foot
        for pt in field
            .points
            .iter()
            .filter(|p| p.class == PointClass::Regular)
        {
            iters = iters.max(pt.feet[0].newton_iters);
        }
        let xs: Vec<Vector2<f64>> = (0..20000)
            .map(|_| {
                Vector2::new(
                    rng.random_range(bbox[0]..bbox[1]),
                    rng.random_range(bbox[2]..bbox[3]),
                )
            })
            .filter(|x| c.contains(x))
            .collect();
        let results: Vec<Option<(f64, f64)>> = xs
            .par_iter()
            .map(|x| {
                let feet = loc.locate(x).unwrap();
                if loc.classify_feet(&feet) != PointClass::Regular {
                    return None;
                }
                Some((
                    feet[0].residual,
                    loc.reconstruction_error(x, &feet[0]).unwrap(),
                ))
            })
            .collect();
        for (r, e) in results.into_iter().flatten().take(5000) {
            residual = residual.max(r);
            recon = recon.max(e);
            total += 1;
        }
    }
    Outcome {
        measured: format!(
            "points={total} residual={} reconstruction={} max_iters={iters}",
            e(residual),
            e(recon)
        ),
        tolerance: "residual<=1e-10 reconstruction<=1e-6 iters<=6 points=10000".into(),
        pass: total == 10_000 && residual <= 1e-10 && recon <= 1e-6 && iters <= 6,
    }
}

fn field_vs_oracle() -> Outcome {
    let oracle_grid = GridSpec::from_box([-1.0, 1.0, -1.0, 1.0], 0.005).unwrap();
    let field_grid = GridSpec::from_box([-1.0, 1.0, -1.0, 1.0], 0.02).unwrap();
    let c = disk();
    let mut parts = Vec::new();
    let mut pass = true;
    let mut slowest: f64 = 0.0;
    for (name, m, tol) in [
        ("euclid", euclid(), 0.01),
        ("randers", randers_x(0.5), 0.015),
    ] {
        let loc = Locator::new(&m, &c, FieldOptions::default()).unwrap();
        let field = compute_field(&loc, field_grid);
        let t = Instant::now();
        let o = oracle_distance(&m, &c, oracle_grid, 4).unwrap();
        slowest = slowest.max(t.elapsed().as_secs_f64());
        let cmp = compare(&field, &o, 1.0, tol);
        pass &= cmp.passes();
        parts.push(format!("{name}={}", e(cmp.max_abs)));
    }
    pass &= slowest < 120.0;
    Outcome {
        measured: format!("{} oracle_secs={slowest:.1}", parts.join(" ")),
        tolerance: "euclid<=0.01 randers<=0.015 secs<120".into(),
        pass,
    }
}

fn singular_set() -> Outcome {
    let m = euclid();
    let h = 0.02;

    let c = disk();
    let loc = Locator::new(&m, &c, FieldOptions::default()).unwrap();
    let field = compute_field(&loc, GridSpec::from_box([-1.0, 1.0, -1.0, 1.0], h).unwrap());
    let cut: Vec<_> = field
        .points
        .iter()
        .filter(|p| p.class == PointClass::Cut)
        .map(|p| p.x)
        .collect();
    let disk_spread = cut.iter().map(|x| x.amax()).fold(0.0, f64::max);
    let disk_ok = !cut.is_empty() && disk_spread <= h;

    let c = ellipse();
    let loc = Locator::new(&m, &c, FieldOptions::default()).unwrap();
    let field = compute_field(&loc, GridSpec::from_box([-2.0, 2.0, -1.0, 1.0], h).unwrap());
    let cut: Vec<_> = field
        .points
        .iter()
        .filter(|p| p.class == PointClass::Cut)
        .map(|p| p.x)
        .collect();
    let off_axis = cut.iter().map(|x| x.y.abs()).fold(0.0, f64::max);
    let xmax = cut.iter().map(|x| x.x).fold(f64::NEG_INFINITY, f64::max);
    let xmin = cut.iter().map(|x| x.x).fold(f64::INFINITY, f64::min);
    let end_err = (xmax - 1.5).abs().max((xmin + 1.5).abs());

    let mut monotone = true;
    for (curve, reach) in [(disk(), 1.2), (ellipse(), 1.6)] {
        let loc = Locator::new(&m, &curve, FieldOptions::default()).unwrap();
        for k in 0..24 {
            let u = 0.013 + k as f64 / 24.0;
            monotone &= ray_ownership(&loc, u, h, reach).unwrap().is_monotone();
        }
    }
    Outcome {
        measured: format!(
            "disk_spread={} ellipse_off_axis={} endpoint_err={} monotone={monotone}",
            e(disk_spread),
            e(off_axis),
            e(end_err)
        ),
        tolerance: format!("disk<=h, on axis, endpoints<=2h (h={h})"),
        pass: disk_ok && off_axis < 1e-12 && end_err <= 2.0 * h && monotone,
    }
}

fn regularity(rng: &mut ChaCha8Rng) -> Outcome {
    let h = 0.02;
    let (mut grad, mut dir, mut ratio_dev, mut ratios, mut margin_ok) =
        (0.0f64, 0.0f64, 0.0f64, 0, true);
    for (m, c, bbox) in [
        (euclid(), ellipse(), [-2.0, 2.0, -1.0, 1.0]),
        (randers_x(0.5), disk(), [-1.0, 1.0, -1.0, 1.0]),
    ] {
        let loc = Locator::new(&m, &c, FieldOptions::default()).unwrap();
        let field = compute_field(&loc, GridSpec::from_box(bbox, h).unwrap());
        let mut pool = regular_with_margin(&field, &m, 3).unwrap();
        pool.shuffle(rng);
        for x in pool.iter().take(100) {
            let g = gradient_check(&loc, x, 1e-4, (3.0 * h).min(0.04)).unwrap();
            grad = grad.max(g.gradient_error);
            dir = dir.max((g.directional - 1.0).abs());
            if let Some(r) = g.hessian_ratio {
                ratio_dev = ratio_dev.max((r - 4.0).abs());
                ratios += 1;
            }
            margin_ok &= jacobian_margin(&loc, x).unwrap() > 1e-6;
        }
    }

    let (m, c) = (euclid(), ellipse());
    let loc = Locator::new(&m, &c, FieldOptions::default()).unwrap();
    let jump = (0..20)
        .map(|k| {
            let x = -1.4 + 2.8 * k as f64 / 19.0;
            gradient_jump(&loc, &Vector2::new(x, 0.02), &Vector2::new(x, -0.02), 1e-4).unwrap()
        })
        .fold(f64::INFINITY, f64::min);
    Outcome {
        measured: format!(
            "grad={} directional={} hessian_ratio_dev={} ({ratios} ratios) min_jump={jump:.4} jacobian_ok={margin_ok}",
            e(grad),
            e(dir),
            e(ratio_dev)
        ),
        tolerance: "grad<=1e-4 directional<=1e-4 |ratio-4|<=0.5 jump>=0.1".into(),
        pass: grad <= 1e-4 && dir <= 1e-4 && ratio_dev <= 0.5 && ratios > 0 && jump >= 0.1 && margin_ok,
    }
}

fn run_verify(config: &Path, out: &Path, threads: &str) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_finsler"))
        .args(["verify", "--threads", threads, "--seed", "3", "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .status()
        .expect("run finsler")
        .code()
        .unwrap_or(-1)
}

fn determinism() -> Outcome {
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/euclid_disk.json");
    let tmp = tempfile::tempdir().unwrap();
    let runs: Vec<_> = [("a", "1"), ("b", "1"), ("c", "4")]
        .iter()
        .map(|(dir, threads)| {
            let out = tmp.path().join(dir);
            let code = run_verify(&config, &out, threads);
            (code, out)
        })
        .collect();
    let read = |dir: &Path, f: &str| std::fs::read(dir.join(f)).unwrap_or_default();
    let identical = runs.iter().skip(1).all(|(_, out)| {
        ["report.json", "summary.txt"]
            .iter()
            .all(|f| read(out, f) == read(&runs[0].1, f))
    });
    let exit_ok = runs.iter().all(|(code, _)| *code == 0);

    let report: serde_json::Value =
        serde_json::from_slice(&read(&runs[0].1, "report.json")).unwrap_or_default();
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for c in report["checks"].as_array().into_iter().flatten() {
        *counts
            .entry(c["name"].as_str().unwrap_or("").to_owned())
            .or_default() += 1;
    }
    let unique = counts.values().all(|&n| n == 1);
    let missing: Vec<_> = IDENTITY_CHECKS
        .iter()
        .filter(|n| counts.get(**n) != Some(&1))
        .collect();
    Outcome {
        measured: format!(
            "identical={identical} exit0={exit_ok} checks={} unique={unique} missing={missing:?}",
            counts.len()
        ),
        tolerance: "byte-identical, each identity once".into(),
        pass: identical && exit_ok && unique && missing.is_empty(),
    }
}

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let criteria: Vec<(&str, Box<dyn FnOnce(&mut ChaCha8Rng) -> Outcome>)> = vec![
        ("metric_axioms", Box::new(metric_axioms)),
        ("normal_system", Box::new(normal_system)),
        ("geodesic_integrity", Box::new(|_| geodesic_integrity())),
        ("conjugate_distances", Box::new(|_| conjugate_distances())),
        ("jacobi_consistency", Box::new(|_| jacobi_consistency())),
        (
            "second_variation_equivalence",
            Box::new(|_| second_variation_equivalence()),
        ),
        ("degeneracy_identity", Box::new(|_| degeneracy())),
        ("foot_inversion", Box::new(foot_inversion)),
        ("field_vs_oracle", Box::new(|_| field_vs_oracle())),
        ("singular_set_geometry", Box::new(|_| singular_set())),
        ("regularity", Box::new(regularity)),
        ("determinism_and_completeness", Box::new(|_| determinism())),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.into_iter().enumerate() {
        let t = Instant::now();
        let o = run(&mut rng);
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!(
            "[{tag}] {:>2} {name:<30} {}  (tol {})  {:.1}s",
            k + 1,
            o.measured,
            o.tolerance,
            t.elapsed().as_secs_f64()
        );
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} passed, {failed} failed", 12 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
