use std::path::PathBuf;

use romcbf::experiment::{run_replay, CommandScript, ExperimentConfig};
use romcbf::experiment::runner::{build, run_item};
use romcbf::plants::PlantKind;

fn path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

#[test]
fn shipped_configs_load_and_validate() {
    for name in ["double_integrator.json", "double_integrator_goal.json", "hopper_arena.json", "quadrotor_alpha_sweep.json"] {
        let cfg = ExperimentConfig::load(&path(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(!cfg.items().is_empty(), "{name}");
    }
}

#[test]
fn sweep_labels_follow_alpha() {
    let cfg = ExperimentConfig::load(&path("quadrotor_alpha_sweep.json")).unwrap();
    assert_eq!(cfg.plant.kind(), PlantKind::Quadrotor);
    let labels: Vec<_> = cfg.items().into_iter().map(|(l, g)| (l.unwrap(), g.alpha)).collect();
    assert_eq!(labels.len(), 3);
    assert!(labels.iter().all(|(l, _)| l.starts_with("alpha_")));
    let alphas: Vec<f64> = labels.iter().map(|x| x.1).collect();
    assert_eq!(alphas, vec![0.25, 1.0, 2.0]);
}

#[test]
fn goal_config_reaches_the_goal_safely() {
    let cfg = ExperimentConfig::load(&path("double_integrator_goal.json")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (report, summary) = run_item(&cfg, cfg.gains, 0, dir.path()).unwrap();
    assert!(report.gain.pass && summary.safe && !summary.diverged, "{summary:?}");
    let csv = std::fs::read_to_string(dir.path().join("rollout.csv")).unwrap();
    let last = csv.lines().last().unwrap();
    let fields: Vec<f64> = last.split(',').map(|f| f.parse().unwrap()).collect();
    // columns: t, x_0, x_1, ...
    assert!((fields[1] - 3.0).hypot(fields[2]) < 0.1, "{last}");
}

#[test]
fn hopper_replay_stays_out_of_every_obstacle() {
    let cfg = ExperimentConfig::load(&path("hopper_arena.json")).unwrap();
    let script = CommandScript::load(&path("hopper_commands.csv")).unwrap();
    let (rows, summary) = run_replay(&cfg, &script, None).unwrap();
    assert!(summary.safe && !summary.diverged, "{summary:?}");
    for r in &rows {
        for o in &cfg.obstacles {
            let d = (r.px - o.center[0]).hypot(r.py - o.center[1]);
            assert!(d >= o.radius - 1e-9, "inside obstacle at t={}", r.t);
        }
    }
}

#[test]
fn fitted_quadrotor_certificate_is_consistent() {
    let cfg = ExperimentConfig::load(&path("quadrotor_alpha_sweep.json")).unwrap();
    let setup = build(&cfg, cfg.gains, 0).unwrap();
    let c = setup.cert.constants();
    assert!(c.rho > 0.0 && c.lambda > 0.0 && c.iota >= 0.0);
    assert!(c.beta > c.iota / c.lambda);
    let again = build(&cfg, cfg.gains, 0).unwrap().cert.constants();
    assert_eq!(c, again);
}
