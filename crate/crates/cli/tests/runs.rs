use std::fs;
use std::path::Path;

use kdv_cli::config::parse_config;
use kdv_cli::output::{read_snapshot, Checkpoint, Manifest};
use kdv_cli::runner::{
    reproduction_config, resume, run, snapshot_path, CHECKPOINT_FILE, DIAGNOSTICS_FILE, MANIFEST_FILE,
    REPRODUCTIONS,
};

const SOLITON: &str = r#"
[run]
solver = "compact_cheb"
p = 2
T = 0.2
Nt = 40
snapshot_every = 5
checkpoint_every = 10

[data]
family = "soliton(1.0, 2, -1.0)"

[compact]
N = 64
c = 2.0
"#;

fn config(overrides: &[&str]) -> kdv_cli::config::RunConfig {
    let o: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    parse_config(SOLITON, &o, None).unwrap()
}

fn diagnostics(dir: &Path) -> String {
    fs::read_to_string(dir.join(DIAGNOSTICS_FILE)).unwrap()
}

#[test]
fn resumed_run_matches_uninterrupted_run() {
    let tmp = tempfile::tempdir().unwrap();
    let full_dir = tmp.path().join("full");
    let full = run(&config(&[]), &full_dir).unwrap();
    assert_eq!(full.manifest.status, "completed");

    let part_dir = tmp.path().join("part");
    let stopped = run(&config(&["--stop_after=17"]), &part_dir).unwrap();
    assert_eq!(stopped.manifest.status, "stopped");
    assert_eq!(stopped.manifest.steps_completed, 17);
    let cp = Checkpoint::read(&part_dir.join(CHECKPOINT_FILE)).unwrap();
    assert_eq!(cp.step, 17);

    let resumed = resume(&part_dir, &[]).unwrap();
    assert_eq!(resumed.manifest.status, "completed");
    assert_eq!(resumed.manifest.steps_completed, 40);
    let diff = full
        .final_u
        .iter()
        .zip(&resumed.final_u)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(diff <= 1e-12, "resume differs by {diff:e}");
    assert_eq!(diagnostics(&full_dir), diagnostics(&part_dir));
    assert_eq!(
        full.manifest.max_rel_drift_tracked,
        resumed.manifest.max_rel_drift_tracked
    );
}

#[test]
fn identical_configs_give_identical_diagnostics() {
    let tmp = tempfile::tempdir().unwrap();
    run(&config(&[]), &tmp.path().join("a")).unwrap();
    run(&config(&[]), &tmp.path().join("b")).unwrap();
    let a = diagnostics(&tmp.path().join("a"));
    assert_eq!(a, diagnostics(&tmp.path().join("b")));
    assert_eq!(a.lines().count(), 1 + 9);
}

#[test]
fn outputs_are_complete() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    let out = run(&config(&[]), &dir).unwrap();
    let m = Manifest::read(&dir.join(MANIFEST_FILE)).unwrap();
    assert_eq!(m, out.manifest);
    assert_eq!(m.tracked_functional.as_deref(), Some("energy"));
    assert!(m.max_rel_drift_tracked.unwrap() < 1e-8);
    let snap = read_snapshot(&snapshot_path(&dir, 40)).unwrap();
    assert!((snap.t - 0.2).abs() < 1e-15);
    assert_eq!(snap.u.len(), 65);
    assert!(snap.x[0].is_nan() && snap.x[64].is_nan());
    for (a, b) in snap.u.iter().zip(&out.final_u) {
        assert!((a - b).abs() <= 1e-15 * (1.0 + b.abs()));
    }
    assert!(dir.join("spectra").join("step_0000000.csv").exists());
    assert!(dir.join(CHECKPOINT_FILE).exists());
}

#[test]
fn resume_without_checkpoint_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let err = resume(tmp.path(), &[]).unwrap_err();
    assert!(err.to_string().contains("config.toml"), "{err}");

    let dir = tmp.path().join("run");
    fs::create_dir_all(&dir).unwrap();
    fs::write(dir.join("config.toml"), config(&[]).to_toml()).unwrap();
    let err = resume(&dir, &[]).unwrap_err();
    assert!(err.to_string().contains("no checkpoint"), "{err}");
}

#[test]
fn resume_rejects_changed_configuration() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    run(&config(&["--stop_after=10"]), &dir).unwrap();

    let err = resume(&dir, &["--N=48".into()]).unwrap_err();
    assert!(err.to_string().contains("shape mismatch"), "{err}");
    let err = resume(&dir, &["--eps=0.5".into()]).unwrap_err();
    assert!(err.to_string().contains("different configuration"), "{err}");
    assert!(resume(&dir, &["--output=elsewhere".into()]).is_ok());
}

#[test]
fn fourier_reference_run() {
    let tmp = tempfile::tempdir().unwrap();
    let text = r#"
[run]
solver = "fourier_ref"
p = 2
T = 0.5
Nt = 100

[data]
family = "soliton(1.0, 2, 0.0)"

[fourier]
M = 256
L = 20.0
"#;
    let cfg = parse_config(text, &[], None).unwrap();
    let out = run(&cfg, &tmp.path().join("f")).unwrap();
    assert_eq!(out.manifest.status, "completed");
    assert!(out.manifest.lambda.is_none());
    let peak = out.final_u.iter().cloned().fold(f64::MIN, f64::max);
    assert!((peak - 3.0).abs() < 1e-3, "peak {peak}");
}

#[test]
fn shipped_configurations_parse() {
    for (id, _) in REPRODUCTIONS {
        let cfg = reproduction_config(id, &[]).unwrap();
        assert_eq!(cfg.output.as_deref(), Some(*id));
    }
    assert!(reproduction_config("nope", &[]).is_err());
}
