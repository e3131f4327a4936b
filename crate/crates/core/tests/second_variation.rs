use finsler_core::boundary::Curve;
use finsler_core::geodesic::{integrate, GeodesicState};
use finsler_core::metric::MetricSpec;
use finsler_core::second_variation::{
    assemble_form_special, curve_length, degeneracy_identity_check, lambda_first_zero,
    lambda_min_at, local_base, second_difference_variation, segment_samples, VariationFamily,
};
use finsler_core::Error;
use nalgebra::{DMatrix, DVector, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn euclid() -> MetricSpec {
    MetricSpec::euclidean(2).unwrap()
}

fn circle_patch() -> finsler_core::boundary::BoundaryPatch<2> {
    Curve::circle(Vector2::zeros(), 1.0)
        .unwrap()
        .adapted_chart(0.0)
}

fn normalized_randers(beta: f64) -> MetricSpec {
    MetricSpec::randers_constant(
        DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, (1.0 - beta) * (1.0 - beta)])),
        vec![0.0, beta],
    )
    .unwrap()
}

fn random_family(rng: &mut ChaCha8Rng, s_bar: f64, nodes: usize) -> VariationFamily {
    let c: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
    VariationFamily::from_fn(s_bar, nodes, 1, |t| {
        let r = t / s_bar;
        let mut z = c[0];
        for (k, ck) in c.iter().enumerate().skip(1) {
            z += ck * (k as f64 * std::f64::consts::PI * r).sin();
        }
        vec![(1.0 - r) * z]
    })
    .unwrap()
}

#[test]
fn length_examples() {
    let e = euclid();
    let seg = segment_samples(&Vector2::zeros(), &Vector2::new(0.0, 1.0), 10);
    assert!((curve_length(&e, &seg, 0.1).unwrap() - 1.0).abs() < 1e-14);
    let r = MetricSpec::randers_constant(DMatrix::identity(2, 2), vec![0.5, 0.0]).unwrap();
    let seg = segment_samples(&Vector2::zeros(), &Vector2::new(1.0, 0.0), 7);
    assert!((curve_length(&r, &seg, 1.0 / 7.0).unwrap() - 1.5).abs() < 1e-14);
    let n = 1571;
    let h = std::f64::consts::FRAC_PI_2 / n as f64;
    let arc: Vec<_> = (0..=n)
        .map(|i| {
            let t = h * i as f64;
            GeodesicState::new(
                Vector2::new(t.cos(), t.sin()),
                Vector2::new(-t.sin(), t.cos()),
            )
        })
        .collect();
    assert!((curve_length(&e, &arc, h).unwrap() - std::f64::consts::FRAC_PI_2).abs() < 1e-8);
}

#[test]
fn flat_boundary_gives_stiffness_matrix() {
    let e = euclid();
    let line = Curve::line(Vector2::zeros(), Vector2::new(1.0, 0.0)).unwrap();
    let patch = line.adapted_chart(0.0);
    let base = local_base(&e, &patch, 1.0, 1e-3).unwrap();
    let n = 64;
    let form = assemble_form_special(&e, &patch, &base, 1.0, n).unwrap();
    let h = 1.0 / n as f64;
    for i in 0..n {
        for j in 0..n {
            let diag = if i == 0 { 1.0 } else { 2.0 };
            let expected = if i == j {
                diag / h
            } else if i.abs_diff(j) == 1 {
                -1.0 / h
            } else {
                0.0
            };
            assert!((form.q[(i, j)] - expected).abs() < 1e-9);
        }
    }
    assert!(form.lambda_min() > 0.0);
}

#[test]
fn gate_refuses_non_special_metrics() {
    let r = MetricSpec::randers_constant(DMatrix::identity(2, 2), vec![0.5, 0.0]).unwrap();
    let line = Curve::line(Vector2::zeros(), Vector2::new(1.0, 0.0)).unwrap();
    let patch = line.adapted_chart(0.0);
    let base = local_base(&r, &patch, 1.0, 1e-3).unwrap();
    let err = assemble_form_special(&r, &patch, &base, 1.0, 16).unwrap_err();
    assert!(matches!(err, Error::GateFailed { .. }), "{err}");
}

#[test]
fn lambda_min_zero_matches_conjugate_distance() {
    let e = euclid();
    let z = lambda_first_zero(&e, &circle_patch(), 0.5, 1.5, 256, 1e-4)
        .unwrap()
        .unwrap();
    assert!((z - 1.0).abs() <= 2e-3, "{z}");
    let ellipse = Curve::ellipse(2.0, 1.0).unwrap().adapted_chart(0.0);
    let z = lambda_first_zero(&e, &ellipse, 0.2, 1.0, 256, 1e-4)
        .unwrap()
        .unwrap();
    assert!((z - 0.5).abs() <= 2e-3, "{z}");
}

#[test]
fn lambda_min_decreases_and_converges() {
    let e = euclid();
    let p = circle_patch();
    let mut prev = f64::INFINITY;
    for k in 1..=12 {
        let s = 0.1 * k as f64;
        let l = lambda_min_at(&e, &p, s, 64, 1e-3).unwrap();
        assert!(l < prev);
        prev = l;
    }
    let l: Vec<f64> = [32, 64, 128]
        .iter()
        .map(|&n| lambda_min_at(&e, &p, 0.8, n, 1e-3).unwrap())
        .collect();
    let ratio = (l[0] - l[1]) / (l[1] - l[2]);
    assert!((ratio - 4.0).abs() < 0.5, "ratio {ratio}");
}

#[test]
fn oracle_agrees_with_assembled_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let cases = [
        (euclid(), circle_patch(), 0.7),
        (
            normalized_randers(0.3),
            Curve::circle(Vector2::new(0.0, 1.5), 1.5)
                .unwrap()
                .adapted_chart(0.75),
            1.2,
        ),
    ];
    for (m, patch, s_bar) in &cases {
        let base = local_base(m, patch, *s_bar, 1e-3).unwrap();
        let form = assemble_form_special(m, patch, &base, *s_bar, 64).unwrap();
        for _ in 0..20 {
            let fam = random_family(&mut rng, *s_bar, 64);
            let q = form.eval(&fam);
            let d2 = second_difference_variation(m, patch, &fam, &base, 1e-2).unwrap();
            let rel = (q - d2).abs() / d2.abs().max(1e-3);
            assert!(rel <= 1e-3, "q={q} oracle={d2}");
        }
    }
}

#[test]
fn oracle_signs() {
    let e = euclid();
    let line = Curve::line(Vector2::zeros(), Vector2::new(1.0, 0.0))
        .unwrap()
        .adapted_chart(0.0);
    let base = local_base(&e, &line, 1.0, 1e-3).unwrap();
    let bump =
        VariationFamily::from_fn(1.0, 32, 1, |t| vec![(std::f64::consts::PI * t).sin()]).unwrap();
    assert!(second_difference_variation(&e, &line, &bump, &base, 1e-2).unwrap() > 0.0);

    let p = circle_patch();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let base = local_base(&e, &p, 0.5, 1e-3).unwrap();
    for _ in 0..50 {
        let fam = random_family(&mut rng, 0.5, 32);
        assert!(second_difference_variation(&e, &p, &fam, &base, 1e-2).unwrap() > 0.0);
    }
    let base = local_base(&e, &p, 1.2, 1e-3).unwrap();
    let kernel = VariationFamily::from_fn(1.2, 32, 1, |t| vec![1.0 - t / 1.2]).unwrap();
    assert!(second_difference_variation(&e, &p, &kernel, &base, 1e-2).unwrap() < 0.0);
}

#[test]
fn degeneracy_identity() {
    let e = euclid();
    let r = degeneracy_identity_check(&e, &circle_patch(), 1.5, 256).unwrap();
    assert!((r.s_star - 1.0).abs() < 1e-5);
    assert!((r.boundary_value - 1.0).abs() < 1e-6, "{r:?}");
    assert!(r.passes(1e-3), "{r:?}");

    let ellipse = Curve::ellipse(2.0, 1.0).unwrap().adapted_chart(0.0);
    let r = degeneracy_identity_check(&e, &ellipse, 1.0, 256).unwrap();
    assert!((r.s_star - 0.5).abs() < 1e-5);
    assert!(r.passes(1e-3), "{r:?}");

    let line = Curve::line(Vector2::zeros(), Vector2::new(1.0, 0.0))
        .unwrap()
        .adapted_chart(0.0);
    assert!(matches!(
        degeneracy_identity_check(&e, &line, 2.0, 256),
        Err(Error::NotApplicable(_))
    ));

    // special-form Randers on a curved boundary
    let m = normalized_randers(0.3);
    let patch = Curve::circle(Vector2::new(0.0, 1.5), 1.5)
        .unwrap()
        .adapted_chart(0.75);
    let r = degeneracy_identity_check(&m, &patch, 3.0, 256).unwrap();
    assert!((r.s_star - 1.5 / 0.7).abs() < 1e-4, "{r:?}");
    assert!(r.passes(1e-3), "{r:?}");
}

#[test]
fn straight_geodesic_integration_is_exact() {
    let e = euclid();
    let s0 = GeodesicState::new(Vector2::zeros(), Vector2::new(0.0, 1.0));
    let t = integrate(&e, s0, 0.0, 0.1, 10, None).unwrap();
    assert!((t.last().xi - Vector2::new(0.0, 1.0)).norm() < 1e-14);
}
