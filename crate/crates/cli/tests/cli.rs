use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mbcascade")).current_dir(dir).args(args).output().expect("binary runs")
}

fn report(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn homology_s2_z2() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), &["homology", "s2-z2", "--seed", "7"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&d.path().join("homology.json"));
    assert_eq!(r["schema"], "1");
    assert_eq!(r["betti"], serde_json::json!([1, 0, 1]));
    assert_eq!(r["d_squared_ok"], true);
    assert_eq!(r["euler"], 2);
    assert!(String::from_utf8_lossy(&o.stdout).contains("betti"));
}

#[test]
fn homology_rejects_non_morse_bott() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), &["homology", "r1-x4"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("not Morse-Bott"));
    let o = run(d.path(), &["homology", "model-x1sq-x2sq"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(d.path(), &["homology", "no-such-example"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn homology_is_deterministic() {
    let d = tempfile::tempdir().unwrap();
    let a = d.path().join("a.json");
    let b = d.path().join("b.json");
    for p in [&a, &b] {
        let o = run(d.path(), &["homology", "t2-cos", "--seed", "7", "--out", p.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(report(&a)["betti"], serde_json::json!([1, 2, 1]));
}

#[test]
fn homology_csv_table() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), &["homology", "s1-flat", "--format", "csv"]);
    assert_eq!(o.status.code(), Some(0));
    let csv = std::fs::read_to_string(d.path().join("homology.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "degree,generators,betti");
    assert_eq!(rows.len(), 3);
    assert!(rows[1].ends_with(",1") && rows[2].ends_with(",1"));
}

#[test]
fn involutions_k3() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), &["involutions", "--kmax", "3", "--grid", "64"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let r = report(&d.path().join("involutions.json"));
    let spectra: Vec<f64> = r["lemma"]["lk"]
        .as_array()
        .unwrap()
        .iter()
        .flat_map(|l| l["spectrum"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect::<Vec<_>>())
        .collect();
    let r2 = 2f64.sqrt();
    for want in [2.0, 4.0 + 2.0 * r2, 4.0 - 2.0 * r2] {
        assert!(spectra.iter().any(|v| (v - want).abs() < 1e-8), "missing {want}");
    }
    assert_eq!(r["checks"]["residuals_below_threshold"], true);
}

#[test]
fn involutions_reject_coarse_grid() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), &["involutions", "--kmax", "5", "--grid", "32"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(d.path(), &["involutions", "--grid", "48"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn involutions_fail_on_tight_threshold() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), &["involutions", "--kmax", "2", "--grid", "16", "--tol-residual", "0"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn novikov_selftest() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), &["novikov", "selftest", "--seed", "1"]);
    assert_eq!(o.status.code(), Some(0));
    let r = report(&d.path().join("novikov.json"));
    assert_eq!(r["inversion_failures"], 0);
    assert_eq!(r["passed"], true);
}

#[test]
fn moment_circle_action() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), &["moment", "s1-c2"]);
    assert_eq!(o.status.code(), Some(0));
    let r = report(&d.path().join("moment.json"));
    assert!(r["identity"]["max_residual"].as_f64().unwrap() < 1e-6);
    assert_eq!(r["h2"]["passed"], true);

    let o = run(d.path(), &["moment", "s1-c2", "--tau", "0"]);
    assert_eq!(o.status.code(), Some(1));
    let r = report(&d.path().join("moment.json"));
    assert_eq!(r["identity_passed"], true);
    assert_eq!(r["h2"]["free"], false);
}

#[test]
fn flow_and_cascade_exports() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), &["flow", "s2-height", "--start", "0.6,0,0.8", "--format", "csv", "--out", "f.csv"]);
    assert_eq!(o.status.code(), Some(0));
    let f = std::fs::read_to_string(d.path().join("f.csv")).unwrap();
    assert!(f.lines().count() > 10);

    let o = run(d.path(), &["cascades", "s2-z2", "--from", "N", "--to", "s"]);
    assert_eq!(o.status.code(), Some(0));
    let r = report(&d.path().join("cascades.json"));
    let unbroken = r["lines"].as_array().unwrap().iter().filter(|l| l["broken"] == false).count();
    assert_eq!(unbroken, 1);

    let o = run(d.path(), &["cascades", "s2-z2", "--from", "N", "--to", "nowhere"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(d.path(), &["flow", "s2-height", "--start", "1,0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_file_with_flag_override() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("run.toml");
    std::fs::write(&cfg, "example = \"s2-height\"\nseed = 3\nout = \"from-config.json\"\n\n[tol]\nmatch_tol = 1e-6\n").unwrap();
    let o = run(d.path(), &["homology", "--config", cfg.to_str().unwrap(), "--seed", "11"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&d.path().join("from-config.json"));
    assert_eq!(r["seed"], 11);
    assert_eq!(r["example"], "s2-height");
    assert_eq!(r["betti"], serde_json::json!([1, 0, 1]));

    std::fs::write(&cfg, "exmaple = \"s2-z2\"\n").unwrap();
    let o = run(d.path(), &["homology", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_defines_custom_action() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("act.toml");
    std::fs::write(&cfg, "samples = 4\n\n[action]\nkind = \"toric\"\nname = \"weights-1-1\"\na = [[1, 1]]\ntau = [0.5]\n").unwrap();
    let o = run(d.path(), &["moment", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&d.path().join("moment.json"));
    assert_eq!(r["h2"]["samples"], 4);
}
