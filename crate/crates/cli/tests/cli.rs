use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn hsicsa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hsicsa")).args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

#[test]
fn lists_presets() {
    let o = hsicsa(&["presets"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    for name in ["ishigami", "portfolio", "cholera_correlated", "cholera_uniform"] {
        assert!(text.lines().any(|l| l == name), "{text}");
    }
}

#[test]
fn config_errors_carry_line_and_column() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "bad.json",
        "{\n  \"schema_version\": 1,\n  \"name\": \"bad\",\n  \"model\": {\"kind\": \"ishigami\", \"a\": 7, \"b\": 0.1},\n  \"sampling\": {\"law\": \"uniform_box\", \"lower\": [0, 0, 0], \"upper\": [1, 1, 1]},\n  \"n\": 100,\n  \"seed\": 1,\n  \"subsets\": [[\"X1\"], [\"X9\"]]\n}\n",
    );
    let o = hsicsa(&["indices", "--config", &cfg]);
    assert!(!o.status.success());
    let err = stderr(&o);
    assert!(err.contains("bad.json:8:"), "{err}");
    assert!(err.contains("X9"), "{err}");
}

#[test]
fn malformed_json_reports_position() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "broken.json", "{\n  \"schema_version\": 1,\n  \"name\": \"x\"\n  \"n\": 3\n}\n");
    let o = hsicsa(&["indices", "--config", &cfg]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("broken.json:4:"), "{}", stderr(&o));
}

#[test]
fn indices_outputs_are_stamped_with_the_config_hash() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = hsicsa(&["indices", "--preset", "ishigami", "--n", "200", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("ishigami_indices.csv")).unwrap();
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("ishigami_indices.json")).unwrap()).unwrap();
    let hash = json["meta"]["config_sha256"].as_str().unwrap();
    assert_eq!(hash.len(), 64);
    assert_eq!(csv.lines().next().unwrap(), format!("# hsicsa {} config_sha256={hash}", env!("CARGO_PKG_VERSION")));
    assert_eq!(csv.lines().nth(1).unwrap(), "subset,hsic,complement_hsic,total_index,total_index_raw,dcorr");
    assert_eq!(csv.lines().count(), 5);
    assert_eq!(json["result"]["report"]["n"], 200);
}

#[test]
fn external_samples_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut xs = String::from("a,b\n");
    let mut ys = String::from("y\n");
    for i in 0..150 {
        let (a, b) = ((i as f64 * 0.37).sin(), (i as f64 * 1.91).cos());
        xs.push_str(&format!("{a},{b}\n"));
        ys.push_str(&format!("{}\n", 3.0 * a + 0.1 * b));
    }
    write(dir.path(), "x.csv", &xs);
    write(dir.path(), "y.csv", &ys);
    let cfg = write(
        dir.path(),
        "ext.json",
        r#"{"schema_version": 1, "name": "ext", "n": 150, "seed": 0,
            "model": {"kind": "external_samples", "inputs": "x.csv", "outputs": "y.csv"},
            "sampling": {"law": "external"}}"#,
    );
    let out = dir.path().join("out");
    let o = hsicsa(&["indices", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("ext_indices.csv")).unwrap();
    let t: Vec<f64> = csv.lines().skip(2).map(|l| l.split(',').nth(3).unwrap().parse().unwrap()).collect();
    assert!(t[0] > t[1], "{t:?}");
}

#[test]
fn unconverged_calibration_writes_diagnostics_and_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "cal.json",
        r#"{"schema_version": 1, "name": "cal", "n": 100, "seed": 2,
            "model": {"kind": "cholera"}, "sampling": {"law": "cholera_fitted"},
            "calibration": {"max_iterations": 1, "noise_fraction": 0.01, "rank_tol": 1e-7}}"#,
    );
    let out = dir.path().join("out");
    let o = hsicsa(&["calibrate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("did not converge"), "{}", stderr(&o));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("cal_calibrate.json")).unwrap()).unwrap();
    assert_eq!(json["result"]["converged"], false);
}

#[test]
fn fit_file_feeds_the_correlated_law() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = hsicsa(&["calibrate", "--preset", "cholera_correlated", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let cfg = write(
        dir.path(),
        "reuse.json",
        r#"{"schema_version": 1, "name": "reuse", "n": 60, "seed": 1,
            "model": {"kind": "cholera"},
            "sampling": {"law": "cholera_fitted", "fit": "out/cholera_correlated_calibrate.json"}}"#,
    );
    let o = hsicsa(&["indices", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("reuse_indices.json")).unwrap()).unwrap();
    let first: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("cholera_correlated_calibrate.json")).unwrap()).unwrap();
    assert_eq!(json["result"]["fit"]["theta_hat"], first["result"]["theta_hat"]);
}

#[test]
fn reduce_samples_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = hsicsa(&["reduce", "--preset", "portfolio", "--samples", "2000", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("portfolio_reduce.json")).unwrap()).unwrap();
    assert_eq!(json["result"]["samples"], 2000);
    assert!(out.join("portfolio_reduce_hist_rho1.csv").is_file());
}

#[test]
fn sequential_and_parallel_runs_agree() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for (d, extra) in [(&a, "--sequential"), (&b, "--threads=3")] {
        let o = hsicsa(&["rho-sweep", "--preset", "portfolio", "--n", "300", extra, "--out", d.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let name = "portfolio_rho_sweep.csv";
    assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap());
}
