use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

use perihelion::ephemeris::{EphemerisTable, MERCURY};
use perihelion::io::read_trajectory_csv;
use perihelion::observation::{advance_angle, ObservedAdvanceConfig};
use perihelion::rcn_orbit::RcnOrbit;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_perihelion"))
        .args(args)
        .arg("--out-dir")
        .arg(dir)
        .env_remove("PERIHELION_EPHEMERIS")
        .output()
        .unwrap()
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn precession_models() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["precession", "mercury", "--model", "rcn"]);
    assert!(o.status.success());
    let rcn = json(dir.path().join("precession.json"))["arcsec_per_century"].as_f64().unwrap();
    assert!((rcn - 7.175).abs() < 0.05, "{rcn}");
    assert!(stdout(&o).contains("arcsec/century    7.175"));

    let o = run(dir.path(), &["precession", "1", "--model", "gr"]);
    assert!(o.status.success());
    let gr = json(dir.path().join("precession.json"))["arcsec_per_century"].as_f64().unwrap();
    assert!((gr - 43.05).abs() < 0.3 && (gr / rcn - 6.0).abs() < 1e-4);

    let o = run(dir.path(), &["precession", "mercury", "--c-scale", "10"]);
    assert!(o.status.success());
    let scaled = json(dir.path().join("precession.json"))["arcsec_per_century"].as_f64().unwrap();
    assert!((scaled * 100.0 / rcn - 1.0).abs() < 1e-6, "{scaled}");
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["precession", "vulcan"][..],
        &["precession", "sun"],
        &["precession", "mercury", "--model", "mond"],
        &["orbit", "mercury", "--span", "0"],
        &["observe", "--l1", "5", "--l2", "5"],
        &["frobnicate"],
    ] {
        let o = run(dir.path(), args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
    }
    let o = run(dir.path(), &["precession", "mercury", "--ephemeris", "/nonexistent.toml"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn integrated_orbit_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["orbit", "mercury", "--model", "rcn", "--output", "m.csv"]);
    assert!(o.status.success());
    let orbit = RcnOrbit::for_body(&EphemerisTable::load_default(), MERCURY).unwrap();
    let rows = read_trajectory_csv(dir.path().join("m.csv")).unwrap();
    assert!(rows.len() > 100);
    assert!((rows.last().unwrap().t_s / orbit.period() - 1.0).abs() < 1e-12);
    let worst = rows.iter().map(|r| (r.r_m / orbit.state_at_time(r.t_s).radius() - 1.0).abs()).fold(0.0, f64::max);
    assert!(worst < 1e-6, "{worst}");
}

#[test]
fn circular_body_has_constant_radius() {
    let dir = tempfile::tempdir().unwrap();
    let mut table = EphemerisTable::load_default();
    let mut body = table.get(MERCURY).unwrap().clone();
    body.index = 11;
    body.name = "Circle".into();
    body.e = 0.0;
    table.bodies.push(body);
    let eph = dir.path().join("eph.toml");
    std::fs::write(&eph, table.to_toml_string()).unwrap();
    for model in ["rcn", "rcn-closed", "gr-geodesic", "proper-kepler"] {
        let o = Command::new(env!("CARGO_BIN_EXE_perihelion"))
            .args(["orbit", "circle", "--model", model, "--out-dir"])
            .arg(dir.path())
            .env("PERIHELION_EPHEMERIS", &eph)
            .output()
            .unwrap();
        assert!(o.status.success(), "{model}: {}", String::from_utf8_lossy(&o.stderr));
        let rows = read_trajectory_csv(dir.path().join("orbit.csv")).unwrap();
        let r0 = rows[0].r_m;
        let worst = rows.iter().map(|r| (r.r_m / r0 - 1.0).abs()).fold(0.0, f64::max);
        // the geodesic starts on the Newtonian circle and breathes at O(ω²a²/c²)
        let tol = if model == "gr-geodesic" { 1e-6 } else { 1e-10 };
        assert!(worst < tol, "{model}: {worst}");
        assert!(json(dir.path().join("manifest.json"))["config"]["ephemeris"].as_str().unwrap().ends_with("eph.toml"));
    }
}

#[test]
fn observe_report_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["observe"]);
    assert!(o.status.success());
    let rep = json(dir.path().join("advance.json"));
    let lib = advance_angle(&ObservedAdvanceConfig::default(), &EphemerisTable::load_default()).unwrap();
    assert_eq!(rep["alpha_rad"].as_f64().unwrap(), lib.alpha_rad);
    assert_eq!(rep["window_ok"], Value::Bool(true));
    assert!((lib.alpha_rad - lib.alpha_expanded_rad).abs() < 1e-6);

    let o = run(dir.path(), &["observe", "--l1", "5", "--l2", "420"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("century window   ok"));

    let o = run(dir.path(), &["observe", "--mode", "exact"]);
    assert!(o.status.success());
    let exact = json(dir.path().join("advance.json"))["alpha_deg"].as_f64().unwrap();
    assert!((exact - lib.alpha_deg).abs() <= 0.02);
}

#[test]
fn sweep_writes_grid() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["observe", "--sweep", "3"]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("phi1_0_rad,phi3_0_rad,alpha_deg"));
    assert_eq!(lines.count(), 9);
    assert_eq!(json(dir.path().join("manifest.json"))["outputs"], serde_json::json!(["sweep.csv"]));
}

#[test]
fn outputs_are_deterministic_and_listed() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for args in [&["orbit", "mercury", "--model", "gr-geodesic"][..], &["observe", "--phi1-0", "-0.4"]] {
        assert!(run(a.path(), args).status.success());
        assert!(run(b.path(), args).status.success());
        let manifest = json(a.path().join("manifest.json"));
        let outputs: Vec<String> =
            manifest["outputs"].as_array().unwrap().iter().map(|v| v.as_str().unwrap().to_string()).collect();
        assert_eq!(outputs.len(), 1);
        for name in &outputs {
            assert_eq!(std::fs::read(a.path().join(name)).unwrap(), std::fs::read(b.path().join(name)).unwrap());
        }
    }
    // nothing besides the listed outputs and the manifest
    let mut names: Vec<String> =
        std::fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(names, ["advance.json", "manifest.json", "orbit.csv"]);
}

#[test]
fn validate_reports_each_criterion() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["validate", "--quick"]);
    let text = stdout(&o);
    for id in 1..=10 {
        assert!(text.contains(&format!(" [{id}] ")), "{text}");
    }
    // the observed-advance criterion does not pass with the built-in table
    assert!(text.contains("FAIL [3]"));
    assert_eq!(o.status.code(), Some(1));
    let reports = json(dir.path().join("validation.json"));
    assert_eq!(reports.as_array().unwrap().len(), 10);
}

#[test]
fn corrupted_ephemeris_fails_named_check() {
    let dir = tempfile::tempdir().unwrap();
    let mut table = EphemerisTable::load_default();
    table.bodies.iter_mut().find(|b| b.index == MERCURY).unwrap().e = 0.5;
    let eph = dir.path().join("bad.toml");
    std::fs::write(&eph, table.to_toml_string()).unwrap();
    let o = run(dir.path(), &["validate", "--quick", "--ephemeris", eph.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let text = stdout(&o);
    assert!(text.contains("FAIL [1]") && text.contains("FAIL 1-gamma"), "{text}");
}
