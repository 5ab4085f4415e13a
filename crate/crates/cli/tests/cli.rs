use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn hrburst(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hrburst"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&read(dir, "manifest.json")).unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("config_in.json");
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

#[test]
fn orbit_reports_period_spikes_and_slow_range() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let o = hrburst(&["orbit", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{o:?}");
    let text = stdout(&o);
    assert!(text.contains("spikes: 9"), "{text}");
    assert!(text.contains("period: 430.77"), "{text}");
    assert!(text.contains("h-range: [1.754"), "{text}");
    let csv = read(&out, "orbit.csv");
    assert!(csv.starts_with("theta,t,V,n,h\n"));
    assert!(!csv.contains('\r'));
    let m = manifest(&out);
    assert_eq!(m["command"], "orbit");
    assert!(m["status"].is_object());
    assert_eq!(m["summary"]["spikes"], 9);
    assert!(m["outputs"].as_array().unwrap().iter().any(|f| f == "orbit.csv"));
}

#[test]
fn repeated_runs_are_bit_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for d in [&a, &b] {
        assert!(hrburst(&["orbit", "--out", d.to_str().unwrap()]).status.success());
    }
    for f in ["orbit.csv", "orbit_events.csv", "orbit_markers.json", "template.csv"] {
        assert_eq!(read(&a, f), read(&b, f), "{f}");
    }
}

#[test]
fn manifest_replays_as_config() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let o = hrburst(&[
        "perturb",
        "--gsyn",
        "0.001",
        "--theta",
        "0.3",
        "--out",
        a.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{o:?}");
    let cfg = a.join("manifest.json");
    let o = hrburst(&[
        "perturb",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        b.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{o:?}");
    assert_eq!(read(&a, "perturbation.csv"), read(&b, "perturbation.csv"));
}

#[test]
fn configuration_errors_exit_with_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let out = out.to_str().unwrap();
    for bad in [
        r#"{"model": {"r": -1}}"#,
        r#"{"modle": {}}"#,
        "not json",
        r#"{"sweep": {"theta": 1.5}}"#,
    ] {
        let cfg = write_config(tmp.path(), bad);
        let o = hrburst(&["orbit", "--config", &cfg, "--out", out]);
        assert_eq!(o.status.code(), Some(2), "{bad}: {o:?}");
        assert!(String::from_utf8_lossy(&o.stderr).contains("error"));
    }
    let o = hrburst(&["orbit", "--config", "/nonexistent/config.json", "--out", out]);
    assert_eq!(o.status.code(), Some(2));
    let o = hrburst(&["perturb", "--theta", "-0.1", "--out", out]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn numerical_failures_exit_with_3() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"model": {"I": -20}, "orbit": {"integrator": {"max_steps": 20000}}}"#,
    );
    let out = tmp.path().join("o");
    let o = hrburst(&["orbit", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{o:?}");
}

#[test]
fn bifurcation_points_are_exported() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let o = hrburst(&["bifdiag", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{o:?}");
    let pts: Value = serde_json::from_str(&read(&out, "bifurcation_points.json")).unwrap();
    let h_of = |label: &str| {
        pts.as_array().unwrap().iter().find(|p| p["label"] == label).unwrap()["h"]
            .as_f64()
            .unwrap()
    };
    assert!((h_of("LP1") - 49.0 / 27.0).abs() < 1e-9);
    assert!((h_of("LP2") - 3.0).abs() < 1e-9);
    assert!((h_of("HC") - 2.0856).abs() < 1e-3);
    assert!(read(&out, "bifurcation.csv").starts_with("h,V,n,stability,branch_id\n"));
}

#[test]
fn adjoint_writes_curve_and_segments() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let o = hrburst(&["adjoint", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{o:?}");
    let rows = read(&out, "adjoint.csv").lines().count();
    assert!(rows > 1000);
    let seg: Value = serde_json::from_str(&read(&out, "segments.json")).unwrap();
    assert!(seg.get("active").is_some(), "{seg}");
}

#[test]
fn perturb_classifies_strong_inhibition_as_early_termination() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let o = hrburst(&[
        "perturb",
        "--polarity",
        "inh",
        "--gsyn",
        "10",
        "--theta",
        "0.1735",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{o:?}");
    assert!(
        stdout(&o).contains("classification: early-termination"),
        "{}",
        stdout(&o)
    );
    let csv = read(&out, "perturbation.csv");
    assert!(csv.starts_with("segment,t,V,n,h,s\n"));
    for seg in ["pre,", "during,", "post,"] {
        assert!(csv.contains(seg));
    }
}

#[test]
fn sweep_output_does_not_depend_on_worker_count() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), r#"{"sweep": {"n_phases": 24, "direct": {"n_orders": 1}}}"#);
    let run = |workers: &str, name: &str| {
        let out = tmp.path().join(name);
        let o = hrburst(&[
            "direct",
            "--config",
            &cfg,
            "--workers",
            workers,
            "--gsyn",
            "0.01",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{o:?}");
        read(&out, "direct_exc_g1e-2.csv")
    };
    let one = run("1", "w1");
    assert_eq!(one, run("3", "w3"));
    assert_eq!(one.lines().count(), 25);
    assert!(
        one.starts_with("theta,dtheta_1,spikes_0,spikes_1,classification,status\n"),
        "{one}"
    );
}

#[test]
fn snrc_reports_spike_count_distribution() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), r#"{"sweep": {"n_phases": 12, "direct": {"n_orders": 1}}}"#);
    let out = tmp.path().join("o");
    let o = hrburst(&["snrc", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{o:?}");
    assert!(stdout(&o).contains("spikes_0 distribution: 9:12"), "{}", stdout(&o));
}

#[test]
fn isochron_portrait_files() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"isochron": {"phases": [0.1, 0.6], "construction": {"seeds": 6, "max_points": 12, "gap_budget": 4}}}"#,
    );
    let out = tmp.path().join("o");
    let o = hrburst(&[
        "isochron",
        "--config",
        &cfg,
        "--h",
        "1.8",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{o:?}");
    let dir = out.join("isochron_h1.8");
    for f in [
        "isochron_0.1000.csv",
        "isochron_0.6000.csv",
        "orbit.csv",
        "equilibria.json",
        "v_nullcline.csv",
    ] {
        assert!(dir.join(f).exists(), "{f}");
    }
    assert!(read(&dir, "isochron_0.1000.csv").starts_with("phase,branch,V,n,backward_time\n"));
}
