//! End-to-end checks of the command-line binary.

use std::path::Path;
use std::process::Command;

fn sokotl(out: &Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_sokotl"))
        .args(args)
        .env("SOKOTL_OUT", out)
        .output()
        .expect("binary runs")
}

#[test]
fn gen_levels_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [a.path(), b.path()] {
        let o = sokotl(dir, &["gen-levels", "--boxes", "2", "--count", "12", "--seed", "7"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["boxes2_seed7.txt", "boxes2_seed7.json"] {
        let x = std::fs::read(a.path().join("levels").join(f)).unwrap();
        let y = std::fs::read(b.path().join("levels").join(f)).unwrap();
        assert_eq!(x, y, "{f}");
    }
    assert!(a.path().join("levels/manifest.json").exists());
}

#[test]
fn failures_emit_a_json_error_record() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["eval", "--checkpoint", "missing.ckpt", "--levels", "missing.txt"][..],
        &["train", "--experiment", "s9t1k1"],
        &["transfer-train", "--experiment", "scratch_t1"],
        &["no-such-command"],
    ] {
        let o = sokotl(dir.path(), args);
        assert!(!o.status.success(), "{args:?}");
        let v: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap_or_else(|e| panic!("{args:?}: {e}: {}", String::from_utf8_lossy(&o.stderr)));
        assert!(v["error"]["kind"].is_string() && v["error"]["message"].is_string(), "{v}");
    }
}

#[test]
fn solve_stats_and_plot_write_manifests() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(sokotl(d, &["gen-levels", "--boxes", "1", "--count", "6", "--seed", "3", "--trivial"])
        .status
        .success());
    let levels = d.join("levels/boxes1_seed3.txt");
    let levels = levels.to_str().unwrap();
    for cmd in ["solve", "stats"] {
        let o = sokotl(d, &[cmd, "--levels", levels]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join(cmd).join("manifest.json")).unwrap()).unwrap();
        assert_eq!(m["status"], "completed");
    }
    let plans = std::fs::read_to_string(d.join("solve/plans.txt")).unwrap();
    assert_eq!(plans.lines().count(), 6);
    let csv = d.join("curve.csv");
    std::fs::write(&csv, "env_steps,mean,ci_halfwidth\n0,0.1,0.05\n1000,0.4,0.1\n").unwrap();
    let o = sokotl(d, &["plot", &format!("run={}", csv.display()), "--seeds", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(std::fs::read_to_string(d.join("plot/plot.svg")).unwrap().starts_with("<svg"));
}

#[test]
fn quick_verify_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = sokotl(dir.path(), &["verify", "--quick"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v.as_array().unwrap().iter().all(|c| c["passed"] == true));
}
