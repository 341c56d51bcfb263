//! End-to-end checks of the `cpt` binary: exit codes, file shapes,
//! reproducibility.

use std::path::Path;
use std::process::Command;

fn cpt() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cpt"))
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    write(&cfg, r#"{ "name": "x", "frobnicate": 1 }"#);
    let out = cpt()
        .args(["adapt", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("config error"));
}

#[test]
fn invalid_controller_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    write(&cfg, r#"{ "controller": { "h_min": 0.0 } }"#);
    let out = cpt()
        .args(["adapt", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn target_outside_window_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    // Sweep window far away from the target: the orientation rule cannot
    // evaluate the likelihood at f_d and the run fails at runtime.
    write(
        &cfg,
        r#"{
            "controller": { "fd_hz": -807600.0, "iters": 4, "tail_k": 2, "tail_m": 4 },
            "sweep": { "center_hz": -300000.0, "width_hz": 400000.0, "points": 41 }
        }"#,
    );
    let out = cpt()
        .args(["adapt", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn spectrum_grid_shape_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    write(
        &cfg,
        r#"{ "sweep": { "center_hz": -807600.0, "width_hz": 400000.0, "points": 201 } }"#,
    );
    for sub in ["a", "b"] {
        let st = cpt()
            .args(["spectrum", "--voltage", "8.5", "--seed", "42", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(dir.path().join(sub))
            .status()
            .unwrap();
        assert!(st.success());
    }
    let a = std::fs::read(dir.path().join("a/spectrum.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b/spectrum.csv")).unwrap();
    assert_eq!(a, b, "same seed must give byte-identical spectra");

    let text = String::from_utf8(a).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "detuning_hz,signal");
    assert_eq!(lines.len(), 202, "header + 201 rows");
    let first: Vec<f64> = lines[1].split(',').map(|v| v.parse().unwrap()).collect();
    let second: Vec<f64> = lines[2].split(',').map(|v| v.parse().unwrap()).collect();
    assert!((second[0] - first[0] - 2000.0).abs() < 1e-9, "2 kHz spacing");
}

#[test]
fn adapt_trace_has_iters_rows_and_valid_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    write(
        &cfg,
        r#"{
            "controller": { "iters": 8, "tail_k": 5, "tail_m": 8 },
            "sweep": { "center_hz": -807600.0, "width_hz": 400000.0, "points": 61 }
        }"#,
    );
    let out_dir = dir.path().join("out");
    let st = cpt()
        .args(["adapt", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .status()
        .unwrap();
    assert!(st.success());
    let trace = std::fs::read_to_string(out_dir.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 9, "header + one row per iteration");
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["schema"], "cpt-1");
    assert_eq!(summary["iters"], 8);
    assert!(summary["U_d_volts"].as_f64().unwrap().is_finite());
    // Snapshot only exists for k = 1 with 8 iterations.
    assert!(out_dir.join("posterior_k01.csv").exists());
    assert!(!out_dir.join("posterior_k10.csv").exists());
}

#[test]
fn config_round_trip_reproduces_run() {
    // Serializing the loaded config and re-running from the serialized file
    // yields identical outputs.
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    write(
        &cfg,
        r#"{
            "noise": { "spectrum_sigma": 0.05, "voltage_jitter_bound": 0.02, "seed": 9 },
            "controller": { "iters": 5, "tail_k": 3, "tail_m": 5 },
            "sweep": { "center_hz": -807600.0, "width_hz": 400000.0, "points": 41 }
        }"#,
    );
    let st = cpt()
        .args(["adapt", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("r1"))
        .status()
        .unwrap();
    assert!(st.success());

    // Round-trip the config through serde.
    let loaded: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&cfg).unwrap()).unwrap();
    let cfg2 = dir.path().join("cfg2.json");
    write(&cfg2, &serde_json::to_string_pretty(&loaded).unwrap());
    let st = cpt()
        .args(["adapt", "--config"])
        .arg(&cfg2)
        .arg("--out")
        .arg(dir.path().join("r2"))
        .status()
        .unwrap();
    assert!(st.success());

    let a = std::fs::read(dir.path().join("r1/trace.csv")).unwrap();
    let b = std::fs::read(dir.path().join("r2/trace.csv")).unwrap();
    assert_eq!(a, b);
}
