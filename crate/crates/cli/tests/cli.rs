use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn romcbf(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_romcbf"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("cfg.json");
    std::fs::write(&p, body).unwrap();
    p
}

const SMALL: &str = r#"{
    "plant": {"name": "double_integrator"},
    "obstacles": [{"center": [1.5, 0.0], "radius": 0.5}],
    "gains": {"alpha": 1.0, "epsilon": 8.0, "sigma": "omitted", "mu": 1.0},
    "nominal": {"type": "goal", "goal": [3.0, 0.0], "gain": 0.5},
    "certificate": {"source": "analytic"},
    "rollout": {"horizon": 2.0, "initial_state": [0.0, 0.2, 0.0, 0.0], "log_stride": 50},
    "certify": {"samples": 500, "boundary_budget": 100}
}"#;

#[test]
fn run_writes_artifacts_and_reruns_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let o = romcbf(&["run", cfg.to_str().unwrap()], out);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for file in ["certificate.json", "rollout.csv", "summary.json"] {
        let (x, y) = (std::fs::read(a.join(file)).unwrap(), std::fs::read(b.join(file)).unwrap());
        assert_eq!(x, y, "{file} differs between runs");
    }
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(a.join("summary.json")).unwrap()).unwrap();
    for key in ["alpha", "gain_margin", "min_h", "min_B", "min_Bdelta", "safe"] {
        assert!(summary.get(key).is_some(), "summary lacks {key}");
    }
}

#[test]
fn sweep_items_get_their_own_directories() {
    let tmp = tempfile::tempdir().unwrap();
    let body = SMALL.replace(
        r#""certify":"#,
        r#""sweep": {"parameter": "alpha", "values": [0.5, 1.0]}, "certify":"#,
    );
    let cfg = write_config(tmp.path(), &body);
    let o = romcbf(&["certify", cfg.to_str().unwrap()], tmp.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("alpha_")).count(), 2, "{stdout}");
}

#[test]
fn empty_sweep_is_a_no_op() {
    let tmp = tempfile::tempdir().unwrap();
    let body = SMALL.replace(r#""certify":"#, r#""sweep": {"parameter": "alpha", "values": []}, "certify":"#);
    let cfg = write_config(tmp.path(), &body);
    let out = tmp.path().join("out");
    let o = romcbf(&["run", cfg.to_str().unwrap()], &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!out.join("summary.json").exists());
}

#[test]
fn config_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        SMALL.replace(r#""mu": 1.0"#, r#""mu": -1.0"#),
        SMALL.replace(r#""certify""#, r#""surprise": 1, "certify""#),
        "{ not json".to_string(),
    ];
    for body in cases {
        let cfg = write_config(tmp.path(), &body);
        let o = romcbf(&["run", cfg.to_str().unwrap()], tmp.path());
        assert_eq!(o.status.code(), Some(2), "{body}\n{}", String::from_utf8_lossy(&o.stderr));
    }
    let o = romcbf(&["run", tmp.path().join("missing.json").to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn replay_runs_and_rejects_malformed_commands() {
    let tmp = tempfile::tempdir().unwrap();
    let arena = configs().join("hopper_arena.json");
    let commands = configs().join("hopper_commands.csv");
    let o = romcbf(&["replay", arena.to_str().unwrap(), commands.to_str().unwrap()], tmp.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("safe=true"));
    assert!(tmp.path().join("replay.csv").exists());

    let bad = tmp.path().join("bad.csv");
    std::fs::write(&bad, "t,vx,vy\n0,1,0\n").unwrap();
    let o = romcbf(&["replay", arena.to_str().unwrap(), bad.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(2));
}
