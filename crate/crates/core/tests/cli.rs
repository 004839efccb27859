use std::path::Path;
use std::process::{Command, Output};

use noisebait::manifest::RunManifest;

fn noisebait(args: &[&str], out_dir: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_noisebait"));
    cmd.args(args).env_remove("NOISEBAIT_OUT_DIR");
    if let Some(d) = out_dir {
        cmd.env("NOISEBAIT_OUT_DIR", d);
    }
    cmd.output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn optimal_noise_prints_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let o = noisebait(&["optimal-noise", "--n", "2", "--h", "0.5"], Some(dir.path()));
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("q* = 0.333333"), "{}", stdout(&o));
    assert!(dir.path().join("optimal-noise.csv").exists());
    assert!(dir.path().join("optimal-noise.manifest.json").exists());
}

#[test]
fn static_sweep_row_and_csv_encoding() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let o = noisebait(&["static-sweep", "--n", "100", "--q", "0.01", "--out-dir", d], None);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read(dir.path().join("static-sweep.csv")).unwrap();
    assert!(!csv.contains(&b'\r'));
    let text = String::from_utf8(csv).unwrap();
    let row = text.lines().find(|l| l.ends_with(",bait_probability")).unwrap();
    let bait: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
    assert!((bait - 0.634).abs() < 5e-4);
}

#[test]
fn json_output() {
    let dir = tempfile::tempdir().unwrap();
    let o = noisebait(&["threshold", "--n", "4", "--format", "json"], Some(dir.path()));
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("threshold.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 8);
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# sweep\nh = 0.3\nn = 12\n").unwrap();
    let o = noisebait(&["static-sweep", "--config", cfg.to_str().unwrap(), "--h", "0.45"], Some(dir.path()));
    assert!(o.status.success(), "{}", stderr(&o));
    let m = RunManifest::read(&dir.path().join("static-sweep.manifest.json")).unwrap();
    assert_eq!(m.config["h"], "0.45");
    assert_eq!(m.config["n"], "12");
    assert!(m.check_files(dir.path()).is_empty());
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = noisebait(&["static-sweep", "--h", "1.5"], Some(dir.path()));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("(0, 1)"), "{}", stderr(&o));

    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "n = 3\nthis line is broken\n").unwrap();
    let o = noisebait(&["static-sweep", "--config", cfg.to_str().unwrap()], Some(dir.path()));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));

    std::fs::write(&cfg, "bogus = 1\n").unwrap();
    let o = noisebait(&["static-sweep", "--config", cfg.to_str().unwrap()], Some(dir.path()));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bogus"));

    let o = noisebait(&["static-sweep", "--nonsense", "1"], Some(dir.path()));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn non_convergence_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let o = noisebait(
        &["dynamic", "--grid-size", "201", "--q-grid-size", "51", "--max-iterations", "3", "--eval-steps", "0"],
        Some(dir.path()),
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn dynamic_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let o = noisebait(&["dynamic", "--kappa", "0.01", "--delta", "0.99", "--h", "0.45"], Some(dir.path()));
    assert!(o.status.success(), "{}", stderr(&o));
    let line = stdout(&o).lines().find(|l| l.starts_with("t* = ")).unwrap().to_string();
    let t: usize = line[5..].parse().unwrap();
    assert!((4..=6).contains(&t));
    let csv = std::fs::read_to_string(dir.path().join("dynamic.csv")).unwrap();
    assert!(csv.starts_with("t,b_t,q_t,"));
}

#[test]
fn replay_detects_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let o = noisebait(&["no-true-cause", "--replications", "3000", "--threads", "2"], Some(dir.path()));
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest = dir.path().join("no-true-cause.manifest.json");
    let again = tempfile::tempdir().unwrap();
    let args = ["replay", manifest.to_str().unwrap(), "--out-dir", again.path().to_str().unwrap(), "--threads", "1"];
    let o = noisebait(&args, None);
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));

    let mut m = RunManifest::read(&manifest).unwrap();
    m.outputs[0].sha256 = "0".repeat(64);
    m.write(&manifest).unwrap();
    let o = noisebait(&args, None);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("DIFFERS"));
}
