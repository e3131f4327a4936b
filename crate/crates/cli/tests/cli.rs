use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

fn finsler(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_finsler"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .expect("run finsler")
}

fn report(out: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap()
}

#[test]
fn configuration_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.json");

    fs::write(&bad, r#"{"boundary": {"kind": "circle", "radius": 1.0}, "box": [-1, 1, -1, 1], "h_grid": 0.1, "s_max": 1}"#)
        .unwrap();
    let o = finsler(&["field"], &bad, &tmp.path().join("o1"));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("metric"));

    fs::write(
        &bad,
        "{\n  \"metric\": {\"kind\": \"euclidean\"},\n  \"boundary\": \n",
    )
    .unwrap();
    let o = finsler(&["verify"], &bad, &tmp.path().join("o2"));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line"));

    // Randers condition broken by the configured drift
    let text = fs::read_to_string(config("randers_disk.json"))
        .unwrap()
        .replace("0.5, 0.0", "1.5, 0.0");
    fs::write(&bad, text).unwrap();
    assert_eq!(
        finsler(&["field"], &bad, &tmp.path().join("o3"))
            .status
            .code(),
        Some(2)
    );

    let o = Command::new(env!("CARGO_BIN_EXE_finsler"))
        .arg("field")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn verify_disk_passes_every_check() {
    let tmp = tempfile::tempdir().unwrap();
    let o = finsler(&["verify"], &config("euclid_disk.json"), tmp.path());
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let r = report(tmp.path());
    let checks = r["checks"].as_array().unwrap();
    assert!(checks.iter().all(|c| c["status"] == "pass"), "{checks:#?}");
    let deg = checks
        .iter()
        .find(|c| c["name"] == "degeneracy_identity")
        .unwrap();
    assert_eq!(deg["status"], "pass");
    assert!(fs::read_to_string(tmp.path().join("summary.txt"))
        .unwrap()
        .contains("degeneracy_identity"));
}

#[test]
fn randers_verify_skips_gated_checks() {
    let tmp = tempfile::tempdir().unwrap();
    let o = finsler(&["verify"], &config("randers_disk.json"), tmp.path());
    assert_eq!(o.status.code(), Some(0));
    let r = report(tmp.path());
    let status = |name: &str| {
        r["checks"]
            .as_array()
            .unwrap()
            .iter()
            .find(|c| c["name"] == name)
            .unwrap()["status"]
            .clone()
    };
    assert_eq!(status("special_form_gate"), "gated-skip");
    assert_eq!(status("degeneracy_identity"), "gated-skip");
    assert_eq!(status("oracle_comparison"), "pass");
}

#[test]
fn field_writes_all_outputs_deterministically() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(
        finsler(&["field", "--threads", "1"], &config("ellipse.json"), &a)
            .status
            .code(),
        Some(0)
    );
    assert_eq!(
        finsler(&["field", "--threads", "3"], &config("ellipse.json"), &b)
            .status
            .code(),
        Some(0)
    );
    for f in ["field.csv", "class.ppm", "report.json", "summary.txt"] {
        let x = fs::read(a.join(f)).unwrap();
        assert!(!x.is_empty(), "{f}");
        assert_eq!(x, fs::read(b.join(f)).unwrap(), "{f} differs between runs");
    }
    let ppm = fs::read(a.join("class.ppm")).unwrap();
    assert!(ppm.starts_with(b"P6\n"));
    let csv = fs::read_to_string(a.join("field.csv")).unwrap();
    assert!(csv.lines().next().unwrap().starts_with("x,y,"));
    let r = report(&a);
    assert_eq!(r["command"], "field");
    assert_eq!(r["unresolved_fraction"], 0.0);
}

#[test]
fn conjugate_sweep_on_the_ellipse() {
    let tmp = tempfile::tempdir().unwrap();
    let o = finsler(&["conjugate"], &config("ellipse.json"), tmp.path());
    assert_eq!(o.status.code(), Some(0));
    let csv = fs::read_to_string(tmp.path().join("conjugate.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("u,x,y,s_star"));
    // an empty s_star means no conjugate point before s_max
    let rows: Vec<Vec<f64>> = lines
        .map(|l| {
            l.split(',')
                .map(|v| v.parse().unwrap_or(f64::NAN))
                .collect()
        })
        .collect();
    let min = rows
        .iter()
        .filter(|r| !r[3].is_nan())
        .min_by(|a, b| a[3].total_cmp(&b[3]))
        .unwrap();
    assert!((min[3] - 0.5).abs() <= 1e-5, "{min:?}");
    assert!(
        (min[1].abs() - 2.0).abs() < 1e-9 && min[2].abs() < 1e-9,
        "{min:?}"
    );
    // the co-vertices focus at distance a²/b = 4, beyond s_max
    assert!(rows.iter().all(|r| r[3].is_nan() || r[3] <= 1.0));
    assert!(rows.iter().any(|r| r[3].is_nan()));
}

#[test]
fn secondvar_finds_the_sign_change() {
    let tmp = tempfile::tempdir().unwrap();
    let o = finsler(&["secondvar"], &config("euclid_disk.json"), tmp.path());
    assert_eq!(o.status.code(), Some(0));
    let r = report(tmp.path());
    assert_eq!(r["gate_passed"], true);
    let change = r["lambda_sign_change"].as_array().unwrap();
    let (lo, hi) = (change[0].as_f64().unwrap(), change[1].as_f64().unwrap());
    assert!(lo < 1.0 && 1.0 <= hi, "{lo} {hi}");
}

#[test]
fn cutlocus_of_the_disk_is_its_centre() {
    let tmp = tempfile::tempdir().unwrap();
    let o = finsler(&["cutlocus"], &config("euclid_disk.json"), tmp.path());
    assert_eq!(o.status.code(), Some(0));
    let csv = fs::read_to_string(tmp.path().join("cutlocus.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert!(!rows.is_empty());
    for row in rows {
        let v: Vec<&str> = row.split(',').collect();
        let (x, y): (f64, f64) = (v[0].parse().unwrap(), v[1].parse().unwrap());
        assert!(x.abs() <= 0.02 && y.abs() <= 0.02, "{row}");
    }
}

#[test]
fn exterior_of_a_circle() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("exterior.json");
    // boundary points land on grid nodes at this spacing
    fs::write(
        &cfg,
        r#"{"metric": {"kind": "euclidean"},
            "boundary": {"kind": "circle", "radius": 1.0, "interior": "outside"},
            "box": [-2, 2, -2, 2], "h_grid": 0.05, "s_max": 1.0}"#,
    )
    .unwrap();
    let out = tmp.path().join("out");
    let o = finsler(&["verify"], &cfg, &out);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let r = report(&out);
    let checks = r["checks"].as_array().unwrap();
    // rays diverge outside a convex curve: nothing is conjugate
    let deg = checks
        .iter()
        .find(|c| c["name"] == "degeneracy_identity")
        .unwrap();
    assert_eq!(deg["status"], "not-applicable");
    assert!(checks.iter().all(|c| c["status"] != "fail"));
}
