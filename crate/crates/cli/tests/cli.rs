use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_polystokes"))
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn run(sub: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    bin().arg(sub).arg("--config").arg(config).arg("--out").arg(out).args(extra).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

const L_SHAPE: &str = "[domain]\npreset = \"l_shape\"\n[mesh]\nh = 0.25\n";
const SQUARE: &str = "[domain]\npreset = \"unit_square\"\n[mesh]\nh = 0.25\n";

#[test]
fn corners_lists_every_corner() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), "l.toml", L_SHAPE);
    let o = run("corners", &cfg, &d.path().join("out"), &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(d.path().join("out/corners.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7);
    for f in ["resolved_config.toml", "metadata.json", "corners.json"] {
        assert!(d.path().join("out").join(f).exists(), "{f}");
    }
}

#[test]
fn zero_data_resolvent_reports_zero_norms() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), "z.toml", &format!("{SQUARE}[task.resolvent]\ns = [0.0, 10.0]\n"));
    let o = run("resolvent", &cfg, &d.path().join("out"), &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let j: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.path().join("out/resolvent.json")).unwrap()).unwrap();
    assert_eq!(j["norms"]["u_v2"], 0.0);
    assert_eq!(j["norms"]["ratio"], serde_json::Value::Null);
}

#[test]
fn bad_configs_exit_with_1() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), "bad.toml", &format!("{SQUARE}colour = 3\n"));
    let o = run("mesh", &cfg, &d.path().join("out"), &[]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("colour"));
    let o = run("mesh", &d.path().join("missing.toml"), &d.path().join("out"), &[]);
    assert_eq!(code(&o), 1);
    let o = bin().arg("mesh").output().unwrap();
    assert_eq!(code(&o), 1);
    let o = bin().arg("frobnicate").output().unwrap();
    assert_eq!(code(&o), 1);
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let d = tempfile::tempdir().unwrap();
    let body = format!("{SQUARE}[task.sweep]\ns = [[0.0, 1.0], [0.0, 10.0]]\nforce = {{ kind = \"manufactured\" }}\n");
    let cfg = write_config(d.path(), "s.toml", &body);
    let (a, b) = (d.path().join("a"), d.path().join("b"));
    assert_eq!(code(&run("sweep", &cfg, &a, &["--workers", "1"])), 0);
    assert_eq!(code(&run("sweep", &cfg, &b, &["--workers", "3"])), 0);
    for f in ["sweep.json", "sweep.csv", "sweep_plot.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_eq!(code(&run("sweep", &cfg, &d.path().join("c"), &["--seedless"])), 0);
}

#[test]
fn verify_exit_status_follows_the_criteria() {
    let d = tempfile::tempdir().unwrap();
    let ok = write_config(d.path(), "ok.toml", &format!("{SQUARE}[task.verify]\nonly = [1, 3]\n"));
    let o = run("verify", &ok, &d.path().join("ok"), &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert_eq!(String::from_utf8_lossy(&o.stdout).lines().filter(|l| l.starts_with("PASS")).count(), 2);
    let meta: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.path().join("ok/metadata.json")).unwrap()).unwrap();
    assert!(meta["details"]["criteria"][0]["runtime_s"].is_number());
    let report = std::fs::read_to_string(d.path().join("ok/verify.json")).unwrap();
    assert!(!report.contains("runtime"));

    // one mesh level gives no observed order, so criterion 6 fails
    let bad = write_config(d.path(), "bad.toml", &format!("{SQUARE}[task.verify]\nonly = [6]\nconvergence_levels = [0.5]\n"));
    assert_eq!(code(&run("verify", &bad, &d.path().join("bad"), &[])), 2);
}

#[test]
fn field_files_feed_back_as_data() {
    let d = tempfile::tempdir().unwrap();
    let first = write_config(d.path(), "first.toml", &format!("{SQUARE}[task.resolvent]\ns = [0.0, 10.0]\nforce = {{ kind = \"manufactured\" }}\n"));
    assert_eq!(code(&run("resolvent", &first, &d.path().join("one"), &[])), 0);
    let second = write_config(d.path(), "second.toml", &format!("{SQUARE}[task.resolvent]\ns = [1.0, 0.0]\nforce = {{ kind = \"field\", path = \"one/u.field\" }}\n"));
    let o = run("resolvent", &second, &d.path().join("two"), &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    // a field on a different mesh is refused
    let third = write_config(d.path(), "third.toml", &format!("[domain]\npreset = \"unit_square\"\n[mesh]\nh = 0.5\n[task.resolvent]\ns = [1.0, 0.0]\nforce = {{ kind = \"field\", path = \"one/u.field\" }}\n"));
    assert_eq!(code(&run("resolvent", &third, &d.path().join("three"), &[])), 1);
}

#[test]
fn evolve_writes_trajectories() {
    let d = tempfile::tempdir().unwrap();
    let body = format!("{SQUARE}[task.evolve]\nmethod = \"euler\"\nt_final = 0.2\ntimes = [0.0, 0.1, 0.2]\ndt = 0.05\nforce = {{ kind = \"manufactured\" }}\n");
    let cfg = write_config(d.path(), "e.toml", &body);
    let o = run("evolve", &cfg, &d.path().join("out"), &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(d.path().join("out/evolve.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(d.path().join("out/u_euler_final.field").exists());
}
