use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use nonbloch_cli::config::{ExperimentConfig, Task};
use nonbloch_cli::Manifest;

fn nonbloch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nonbloch")).args(args).env_remove("NONBLOCH_THREADS").output().expect("spawn nonbloch")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL_MODEL: &str = r#"{
  "model": {"bands": 1, "coeffs": [
    {"row": 0, "col": 0, "power": 1, "re": 0.0, "im": 1.2},
    {"row": 0, "col": 0, "power": -1, "re": 0.0, "im": -0.8},
    {"row": 0, "col": 0, "power": 2, "re": 0.0, "im": 0.35},
    {"row": 0, "col": 0, "power": 0, "re": 0.0, "im": -0.35}
  ]},
  "sites": 30,
  "tasks": ["evolve"]
}"#;

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.json", r#"{"preset": "fig3f", "tasks": ["thimbles"], "colour": 1}"#);
    let out = dir.path().join("out");
    let o = nonbloch(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(!o.status.success());
    let err = stderr(&o);
    assert!(err.contains("unknown field `colour`"), "{err}");
    assert!(err.contains("bad.json"), "{err}");
    assert!(!out.exists());
}

#[test]
fn empty_task_list_is_a_no_op() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "empty.json", r#"{"preset": "fig2a", "tasks": []}"#);
    let out = dir.path().join("out");
    let o = nonbloch(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--check"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(!out.exists());
    assert!(nonbloch_cli::run(ExperimentConfig::for_preset("fig7").map(|mut c| {
        c.tasks.clear();
        c
    }).unwrap(), &out).unwrap().is_none());
}

#[test]
fn unknown_task_lists_known_ones() {
    let dir = tempfile::tempdir().unwrap();
    let o = nonbloch(&["run", "--preset", "fig3f", "--task", "bogus", "--out", dir.path().to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("known: spectra, saddles"), "{}", stderr(&o));
}

#[test]
fn bad_thread_env_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_nonbloch"))
        .args(["run", "--preset", "fig3f", "--task", "saddles", "--out", dir.path().to_str().unwrap()])
        .env("NONBLOCH_THREADS", "many")
        .output()
        .unwrap();
    assert!(!o.status.success());
    assert!(stderr(&o).contains("NONBLOCH_THREADS"));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = nonbloch(&["run", "--preset", "fig3f", "--task", "spectra,saddles,thimbles", "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.tasks, vec![Task::Spectra, Task::Saddles, Task::Thimbles]);
    assert!(manifest.passed);
    for name in &manifest.outputs {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name} differs");
    }
    for name in ["spectrum.csv", "gbz.csv", "saddles.csv", "thimbles.csv", "classification.json"] {
        assert!(manifest.outputs.iter().any(|o| o == name), "{name} missing from {:?}", manifest.outputs);
    }
}

#[test]
fn check_mode_exit_status() {
    let dir = tempfile::tempdir().unwrap();
    let ok = write_config(dir.path(), "ok.json", SMALL_MODEL);
    let o = nonbloch(&["run", "--config", &ok, "--out", dir.path().join("ok").to_str().unwrap(), "--check"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let strict = SMALL_MODEL.replace(r#""tasks": ["evolve"]"#, r#""tasks": ["evolve"], "tolerances": {"evolve.mu_vs_point_o": 1e-15}"#);
    let strict = write_config(dir.path(), "strict.json", &strict);
    let out = dir.path().join("strict");
    let o = nonbloch(&["run", "--config", &strict, "--out", out.to_str().unwrap(), "--check"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL  evolve.mu_vs_point_o"));
    // without --check the same run succeeds but records the failure
    let o = nonbloch(&["run", "--config", &strict, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert!(!manifest.passed);
    assert_eq!(manifest.failures().len(), 1);
}

#[test]
fn manifest_records_hash_and_versions() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::from_json(SMALL_MODEL).unwrap();
    let m = nonbloch_cli::run(cfg.clone(), dir.path()).unwrap().unwrap();
    assert_eq!(m.config_hash, nonbloch_cli::config_hash(&cfg).unwrap());
    for module in ["symbol", "lattice", "saddle", "thimble", "dynamics", "healing", "cli"] {
        assert!(m.versions.contains_key(module), "{module}");
    }
    assert!(m.checks.iter().all(|c| c.prediction.is_finite() && c.measured.is_finite()));
    for name in ["trace.csv", "heatmap.csv", "report.json", "manifest.json"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
}

#[test]
fn plot_reports_malformed_line() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("spectrum.csv");
    fs::write(&csv, "re,im,kind\n1,2,obc\n3,4\n").unwrap();
    let o = nonbloch(&["plot", csv.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));

    fs::write(&csv, "re,im,kind\n1,2,obc\nx,4,obc\n").unwrap();
    let o = nonbloch(&["plot", csv.to_str().unwrap()]);
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));

    fs::write(&csv, "a,b\n1,2\n").unwrap();
    let o = nonbloch(&["plot", csv.to_str().unwrap()]);
    assert!(stderr(&o).contains("line 1: unrecognized header"), "{}", stderr(&o));
}

#[test]
fn plot_renders_run_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.json", SMALL_MODEL);
    let run = dir.path().join("run");
    let o = nonbloch(&["run", "--config", &cfg, "--task", "spectra,evolve", "--out", run.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let svg = dir.path().join("svg");
    let inputs: Vec<String> = ["spectrum.csv", "trace.csv", "heatmap.csv"].iter().map(|f| run.join(f).to_str().unwrap().to_string()).collect();
    let mut args = vec!["plot", "--out", svg.to_str().unwrap()];
    args.extend(inputs.iter().map(String::as_str));
    let o = nonbloch(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["spectrum.svg", "trace.svg", "heatmap.svg"] {
        let text = fs::read_to_string(svg.join(f)).unwrap();
        assert!(text.starts_with("<svg ") && text.trim_end().ends_with("</svg>"), "{f}");
    }
}

#[test]
fn scan_writes_verdict_map() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "scan.json",
        r#"{"preset": "fig6a", "sites": 80, "healing": {"params": {"t_end": 30.0}}}"#,
    );
    let o = nonbloch(&["scan", "--config", &cfg, "--out", dir.path().to_str().unwrap(), "--re", "-1", "-1", "1", "--im", "-0.3", "0.3", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("scan_map.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "re,im,verdict,slope");
    assert_eq!(lines.len(), 3);
}
