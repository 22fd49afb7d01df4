use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{CertificateSpec, ExperimentConfig, NominalSpec, PlantSpec};
use crate::cbf::{circular_obstacle_cbf, smooth_combine, FilterGains, ReducedCbf, SafetyFilter};
use crate::composite::{certify_invariance, estimate_delta, gain_condition, CompositeBarrier, GainCheck, InvarianceReport};
use crate::plants::double_integrator::double_integrator_system;
use crate::plants::quadrotor::{
    normalize_quaternion, quadrotor_domain, quadrotor_system, QuadrotorInterface, TrackingLyapunov,
};
use crate::plants::single_integrator_rom;
use crate::rom::{ReducedController, RomSystem};
use crate::sampling::Halton;
use crate::sim::{closed_loop_states, min_over_rollout, rollout, RolloutLog};
use crate::simfun::{
    check_decrease, check_lower_bound, check_regular_value, estimate_beta, estimate_constants,
    sublevel_boundary_samples, CertificateConstants, CheckReport, FittedConstants, SimulationCertificate,
};
use crate::{Error, Result, Vector};

pub fn nominal_controller(spec: &NominalSpec) -> Arc<dyn ReducedController> {
    match *spec {
        NominalSpec::Goal { goal, gain, max_speed } => {
            let goal = Vector::from_column_slice(&goal);
            Arc::new(move |y: &Vector| {
                let v = (&goal - y) * gain;
                match max_speed {
                    Some(s) if v.norm() > s => v.normalize() * s,
                    _ => v,
                }
            })
        }
        NominalSpec::Constant { velocity } => {
            let v = Vector::from_column_slice(&velocity);
            Arc::new(move |_: &Vector| v.clone())
        }
    }
}

/// One circular CBF per obstacle, smooth-combined when there are several.
pub fn arena_cbf(cfg: &ExperimentConfig) -> Result<ReducedCbf> {
    let parts = cfg
        .obstacles
        .iter()
        .map(|o| circular_obstacle_cbf(&o.center, o.radius))
        .collect::<Result<Vec<_>>>()?;
    smooth_combine(&parts, cfg.smooth_kappa)
}

/// Everything a sweep item needs, assembled from the config and its gains.
pub struct Setup {
    pub sys: RomSystem,
    pub cbf: ReducedCbf,
    pub kappa: Arc<SafetyFilter>,
    pub cert: SimulationCertificate,
    pub fitted: Option<FittedConstants>,
    quadrotor: Option<Arc<QuadrotorInterface>>,
}

impl Setup {
    /// Thrust clamps recorded by the quadrotor interface so far.
    pub fn clamp_events(&self) -> u64 {
        self.quadrotor.as_ref().map_or(0, |k| k.clamp_events())
    }
}

pub fn build(cfg: &ExperimentConfig, gains: FilterGains, seed: u64) -> Result<Setup> {
    let cbf = arena_cbf(cfg)?;
    let kappa = Arc::new(SafetyFilter::new(cbf.clone(), single_integrator_rom(), gains, nominal_controller(&cfg.nominal)));
    match (&cfg.plant, cfg.certificate) {
        (PlantSpec::DoubleIntegrator { params }, CertificateSpec::Analytic) => {
            let (sys, cert) = double_integrator_system(*params, kappa.clone());
            Ok(Setup { sys, cbf, kappa, cert, fitted: None, quadrotor: None })
        }
        (PlantSpec::DoubleIntegrator { params }, CertificateSpec::Fitted { .. }) => {
            let (sys, analytic) = double_integrator_system(*params, kappa.clone());
            let value = |x: &Vector| analytic.value(x);
            let (fitted, constants) = fit(cfg, &sys, &kappa, &value, analytic.interface().as_ref(), seed, None)?;
            let cert = analytic.with_constants(constants)?;
            Ok(Setup { sys, cbf, kappa, cert, fitted: Some(fitted), quadrotor: None })
        }
        (PlantSpec::Quadrotor { params }, _) => {
            let sys = quadrotor_system(*params);
            let interface = Arc::new(QuadrotorInterface::new(*params, kappa.clone()));
            let lyap = TrackingLyapunov::new(*params, kappa.clone());
            let value = |x: &Vector| lyap.value(x);
            let normalize = |x: &mut Vector| normalize_quaternion(x);
            let (fitted, constants) = fit(cfg, &sys, &kappa, &value, interface.as_ref(), seed, Some(&normalize))?;
            let (domain, region) = quadrotor_domain(params);
            let cert = SimulationCertificate::new(move |x: &Vector| lyap.value(x), interface.clone(), constants, domain, region)?;
            Ok(Setup { sys, cbf, kappa, cert, fitted: Some(fitted), quadrotor: Some(interface) })
        }
    }
}

/// `β` from the domain faces (or the plant's own `β` when the domain is
/// unbounded), then `(ρ, λ, ι)` fitted on `Ω_β` along rollouts from the
/// configured start and from low-discrepancy samples of the sampling region.
fn fit(
    cfg: &ExperimentConfig,
    sys: &RomSystem,
    kappa: &Arc<SafetyFilter>,
    value: &(dyn Fn(&Vector) -> f64 + Sync),
    interface: &dyn crate::simfun::Interface,
    seed: u64,
    normalize: Option<&(dyn Fn(&mut Vector) + Sync)>,
) -> Result<(FittedConstants, CertificateConstants)> {
    let CertificateSpec::Fitted { rollouts, horizon, dt, stride, beta_samples } = cfg.certificate else {
        unreachable!("fit called for an analytic certificate");
    };
    let (domain, region, fixed_beta) = match &cfg.plant {
        PlantSpec::Quadrotor { params } => {
            let (d, r) = quadrotor_domain(params);
            (d, r, None)
        }
        PlantSpec::DoubleIntegrator { params } => {
            let (d, r) = crate::plants::double_integrator::double_integrator_domain(params);
            (d, r, Some(params.beta))
        }
    };
    let mut starts = vec![Vector::from_column_slice(&cfg.rollout.initial_state)];
    let mut seq = Halton::new(region.dim(), seed)?;
    for _ in 1..rollouts {
        let mut x = region.from_unit(&seq.next_point());
        sys.fom.normalize(&mut x);
        starts.push(x);
    }
    let steps = (horizon / dt).round() as usize;
    let trajectories: Vec<Vec<Vector>> = starts
        .par_iter()
        .filter_map(|x0| closed_loop_states(&sys.fom, interface, x0, dt, steps, stride).ok())
        .collect();
    if trajectories.is_empty() {
        return Err(Error::EstimationFailed("every fitting rollout diverged".into()));
    }
    let beta = match fixed_beta {
        Some(b) => b,
        None => estimate_beta(value, &domain, &region, beta_samples, seed, normalize)?,
    };
    let fitted = estimate_constants(sys, kappa.as_ref(), value, None, interface, &trajectories, Some(beta))?;
    let constants = CertificateConstants { rho: fitted.rho, lambda: fitted.lambda, iota: fitted.iota, beta };
    constants.validate()?;
    Ok((fitted, constants))
}

/// Certificate checks and invariance certification for one sweep item.
#[derive(Debug, Clone, Serialize)]
pub struct CertificateReport {
    pub gains: FilterGains,
    pub constants: CertificateConstants,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fitted: Option<FittedConstants>,
    pub lower_bound: CheckReport,
    pub decrease: CheckReport,
    /// `None` when no sample landed on the level set of `β`.
    pub regular_value: Option<CheckReport>,
    pub gain: GainCheck,
    pub delta: f64,
    pub invariance: InvarianceReport,
}

pub fn certify_setup(
    cfg: &ExperimentConfig,
    setup: &Setup,
    gains: FilterGains,
    seed: u64,
) -> Result<(CompositeBarrier, CertificateReport)> {
    let Setup { sys, cbf, kappa, cert, .. } = setup;
    let delta = estimate_delta(sys, cert, cfg.certify.samples, seed)?;
    let cb = CompositeBarrier::new(cbf.clone(), cert.clone(), gains, delta)?;
    let samples = cert.region_samples(sys, cfg.certify.samples, seed)?;
    let lower_bound = check_lower_bound(cert, sys, kappa.as_ref(), &samples)?;
    let decrease = check_decrease(cert, sys, &samples)?;
    let regular_value = match sublevel_boundary_samples(cert, sys, cfg.certify.boundary_budget, seed)
        .and_then(|b| check_regular_value(cert, &b))
    {
        Ok(r) => Some(r),
        Err(Error::Inconclusive(_)) => None,
        Err(e) => return Err(e),
    };
    let invariance = certify_invariance(&cb, sys, cfg.certify.boundary_budget, seed)?;
    let report = CertificateReport {
        gains,
        constants: cert.constants(),
        fitted: setup.fitted,
        lower_bound,
        decrease,
        regular_value,
        gain: gain_condition(cert, &gains),
        delta,
        invariance,
    };
    Ok((cb, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub alpha: f64,
    pub gain_margin: f64,
    pub min_h: f64,
    #[serde(rename = "min_B")]
    pub min_b: f64,
    #[serde(rename = "min_Bdelta")]
    pub min_b_delta: f64,
    pub safe: bool,
    pub diverged: bool,
    pub clamp_events: u64,
}

impl RunSummary {
    pub fn from_log(log: &RolloutLog, gains: &FilterGains, gain_margin: f64, diverged: bool, clamp_events: u64) -> Result<Self> {
        let min_h = min_over_rollout(log, "h")?.1;
        Ok(Self {
            alpha: gains.alpha,
            gain_margin,
            min_h,
            min_b: min_over_rollout(log, "B")?.1,
            min_b_delta: min_over_rollout(log, "Bdelta")?.1,
            safe: min_h >= 0.0,
            diverged,
            clamp_events,
        })
    }
}

#[derive(Debug, Clone)]
pub struct ItemOutcome {
    pub label: Option<String>,
    pub report: CertificateReport,
    pub summary: Option<RunSummary>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn item_dir(out: &Path, label: &Option<String>) -> Result<std::path::PathBuf> {
    let dir = match label {
        Some(l) => out.join(l),
        None => out.to_path_buf(),
    };
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

/// Certify pipeline plus closed-loop rollout for one item; writes
/// `rollout.csv`, `certificate.json` and `summary.json` into `dir`.
pub fn run_item(cfg: &ExperimentConfig, gains: FilterGains, seed: u64, dir: &Path) -> Result<(CertificateReport, RunSummary)> {
    let setup = build(cfg, gains, seed)?;
    let (cb, report) = certify_setup(cfg, &setup, gains, seed)?;
    write_json(&dir.join("certificate.json"), &report)?;
    let clamps_before = setup.clamp_events();
    let (log, diverged) = match rollout(&setup.sys, setup.kappa.as_ref(), &cb, &cfg.rollout) {
        Ok(log) => (log, false),
        Err(Error::RolloutDiverged { log, .. }) => (*log, true),
        Err(e) => return Err(e),
    };
    log.save_csv(&dir.join("rollout.csv"))?;
    let summary = RunSummary::from_log(&log, &gains, report.gain.margin, diverged, setup.clamp_events() - clamps_before)?;
    write_json(&dir.join("summary.json"), &summary)?;
    Ok((report, summary))
}

/// Runs every sweep item in parallel, each under its own subdirectory.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path, seed: u64) -> Result<Vec<ItemOutcome>> {
    cfg.items()
        .into_par_iter()
        .map(|(label, gains)| {
            let dir = item_dir(out, &label)?;
            let (report, summary) = run_item(cfg, gains, seed, &dir)?;
            Ok(ItemOutcome { label, report, summary: Some(summary) })
        })
        .collect()
}

/// Certification only: writes `certificate.json` per item.
pub fn certify_experiment(cfg: &ExperimentConfig, out: &Path, seed: u64) -> Result<Vec<ItemOutcome>> {
    cfg.items()
        .into_par_iter()
        .map(|(label, gains)| {
            let dir = item_dir(out, &label)?;
            let setup = build(cfg, gains, seed)?;
            let (_, report) = certify_setup(cfg, &setup, gains, seed)?;
            write_json(&dir.join("certificate.json"), &report)?;
            Ok(ItemOutcome { label, report, summary: None })
        })
        .collect()
}
