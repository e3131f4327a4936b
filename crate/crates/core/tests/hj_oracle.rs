use std::time::Instant;

use finsler_core::boundary::Curve;
use finsler_core::field::{compute_field, FieldOptions, GridSpec, Locator};
use finsler_core::metric::MetricSpec;
use finsler_core::oracle::{compare, oracle_distance, oracle_distance_window, OracleGrid};
use nalgebra::{DMatrix, Vector2};

fn euclid() -> MetricSpec {
    MetricSpec::euclidean(2).unwrap()
}

fn randers_x(beta: f64) -> MetricSpec {
    MetricSpec::randers_constant(DMatrix::identity(2, 2), vec![beta, 0.0]).unwrap()
}

fn disk() -> Curve {
    Curve::circle(Vector2::zeros(), 1.0).unwrap()
}

fn disk_error(o: &OracleGrid) -> f64 {
    let g = o.grid;
    let mut worst: f64 = 0.0;
    for j in 0..g.ny {
        for i in 0..g.nx {
            if let Some(d) = o.at(i, j) {
                worst = worst.max((d - (1.0 - g.point(i, j).norm())).abs());
            }
        }
    }
    worst
}

#[test]
fn euclidean_disk_oracle() {
    let grid = GridSpec::from_box([-1.0, 1.0, -1.0, 1.0], 0.005).unwrap();
    let t = Instant::now();
    let o = oracle_distance(&euclid(), &disk(), grid, 4).unwrap();
    assert!(t.elapsed().as_secs() < 120);
    assert_eq!(o.disconnected, 0);
    let err = disk_error(&o);
    assert!(err <= 0.01, "{err}");
}

#[test]
fn refinement_improves_the_oracle() {
    let coarse = oracle_distance(
        &euclid(),
        &disk(),
        GridSpec::from_box([-1.0, 1.0, -1.0, 1.0], 0.02).unwrap(),
        2,
    )
    .unwrap();
    let fine = oracle_distance(
        &euclid(),
        &disk(),
        GridSpec::from_box([-1.0, 1.0, -1.0, 1.0], 0.01).unwrap(),
        4,
    )
    .unwrap();
    let (ec, ef) = (disk_error(&coarse), disk_error(&fine));
    assert!(ec / ef >= 1.8, "{ec} / {ef}");

    // finer graphs contain the coarse paths up to quadrature error
    let g = coarse.grid;
    for j in 0..g.ny {
        for i in 0..g.nx {
            if let (Some(c), Some(f)) = (coarse.at(i, j), fine.at(2 * i, 2 * j)) {
                assert!(f <= c + 1e-3, "({i},{j}): {f} > {c}");
            }
        }
    }
}

#[test]
fn randers_half_plane_oracle() {
    let line = Curve::line(Vector2::zeros(), Vector2::new(1.0, 0.0)).unwrap();
    let grid = GridSpec::from_box([-2.0, 2.0, 0.0, 2.0], 0.01).unwrap();
    let o = oracle_distance_window(&randers_x(0.5), &line, (-2.0, 2.0), grid, 4).unwrap();
    let d = o.sample(&Vector2::new(0.0, 1.0)).unwrap();
    assert!((d - 3f64.sqrt() / 2.0).abs() <= 0.01, "{d}");
}

#[test]
fn field_matches_oracle_and_catches_a_flipped_drift() {
    let oracle_grid = GridSpec::from_box([-1.0, 1.0, -1.0, 1.0], 0.005).unwrap();
    let field_grid = GridSpec::from_box([-1.0, 1.0, -1.0, 1.0], 0.04).unwrap();
    let c = disk();

    let e = euclid();
    let loc = Locator::new(&e, &c, FieldOptions::default()).unwrap();
    let field = compute_field(&loc, field_grid);
    let o = oracle_distance(&e, &c, oracle_grid, 4).unwrap();
    let cmp = compare(&field, &o, 1.0, 0.01);
    assert!(cmp.passes(), "{cmp:?}");

    let m = randers_x(0.5);
    let loc = Locator::new(&m, &c, FieldOptions::default()).unwrap();
    let field = compute_field(&loc, field_grid);
    let o = oracle_distance(&m, &c, oracle_grid, 4).unwrap();
    let cmp = compare(&field, &o, 1.0, 0.015);
    assert!(cmp.passes(), "{cmp:?}");

    let flipped = randers_x(-0.5);
    let bad = oracle_distance(&flipped, &c, oracle_grid, 4).unwrap();
    let cmp = compare(&field, &bad, 1.0, 0.015);
    assert!(!cmp.passes(), "{cmp:?}");
}
