use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cbf::{FilterGains, Sigma};
use crate::plants::double_integrator::DoubleIntegratorParams;
use crate::plants::quadrotor::QuadrotorParams;
use crate::plants::PlantKind;
use crate::sim::RolloutConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Obstacle {
    pub center: [f64; 2],
    pub radius: f64,
}

/// Reduced-order command before filtering.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum NominalSpec {
    /// `gain·(goal − y)`, saturated at `max_speed` when given.
    Goal {
        goal: [f64; 2],
        gain: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_speed: Option<f64>,
    },
    Constant { velocity: [f64; 2] },
}

/// Where the simulation-function constants come from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum CertificateSpec {
    /// Closed-form constants; only the double integrator has them.
    Analytic,
    /// Constants fitted from closed-loop rollouts started at low-discrepancy
    /// samples of the sampling region.
    Fitted {
        #[serde(default = "default_fit_rollouts")]
        rollouts: usize,
        #[serde(default = "default_fit_horizon")]
        horizon: f64,
        #[serde(default = "default_fit_dt")]
        dt: f64,
        #[serde(default = "default_fit_stride")]
        stride: usize,
        #[serde(default = "default_beta_samples")]
        beta_samples: usize,
    },
}

fn default_fit_rollouts() -> usize {
    32
}
fn default_fit_horizon() -> f64 {
    3.0
}
fn default_fit_dt() -> f64 {
    2e-3
}
fn default_fit_stride() -> usize {
    10
}
fn default_beta_samples() -> usize {
    256
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    Alpha,
    Epsilon,
    Mu,
    Sigma,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::Alpha => "alpha",
            SweepParameter::Epsilon => "epsilon",
            SweepParameter::Mu => "mu",
            SweepParameter::Sigma => "sigma",
        }
    }

    pub fn apply(self, gains: &FilterGains, value: f64) -> FilterGains {
        let mut g = *gains;
        match self {
            SweepParameter::Alpha => g.alpha = value,
            SweepParameter::Epsilon => g.epsilon = value,
            SweepParameter::Mu => g.mu = value,
            SweepParameter::Sigma => g.sigma = Sigma::Value(value),
        }
        g
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifySpec {
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_boundary_budget")]
    pub boundary_budget: usize,
}

fn default_samples() -> usize {
    2000
}
fn default_boundary_budget() -> usize {
    400
}

impl Default for CertifySpec {
    fn default() -> Self {
        Self { samples: default_samples(), boundary_budget: default_boundary_budget() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum PlantSpec {
    Quadrotor {
        #[serde(default)]
        params: QuadrotorParams,
    },
    DoubleIntegrator {
        #[serde(default)]
        params: DoubleIntegratorParams,
    },
}

impl PlantSpec {
    pub fn kind(&self) -> PlantKind {
        match self {
            PlantSpec::Quadrotor { .. } => PlantKind::Quadrotor,
            PlantSpec::DoubleIntegrator { .. } => PlantKind::DoubleIntegrator,
        }
    }
}

/// One experiment: a plant, an obstacle arena, filter gains and what to run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub plant: PlantSpec,
    pub obstacles: Vec<Obstacle>,
    #[serde(default = "default_smooth_kappa")]
    pub smooth_kappa: f64,
    pub gains: FilterGains,
    pub nominal: NominalSpec,
    pub certificate: CertificateSpec,
    pub rollout: RolloutConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub certify: CertifySpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

fn default_smooth_kappa() -> f64 {
    1000.0
}

fn config_error(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(config_error)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Semantic checks beyond the schema; every failure is a config error.
    pub fn validate(&self) -> Result<()> {
        let check = |r: Result<()>| r.map_err(config_error);
        if self.obstacles.is_empty() {
            return Err(Error::Config("at least one obstacle is required".into()));
        }
        for o in &self.obstacles {
            if !(o.radius > 0.0 && o.radius.is_finite()) || o.center.iter().any(|c| !c.is_finite()) {
                return Err(Error::Config(format!("invalid obstacle {o:?}")));
            }
        }
        if !(self.smooth_kappa > 0.0 && self.smooth_kappa.is_finite()) {
            return Err(Error::Config(format!("smooth_kappa must be positive, got {}", self.smooth_kappa)));
        }
        check(self.gains.validate())?;
        match self.plant {
            PlantSpec::Quadrotor { params } => {
                check(params.validate())?;
                if self.certificate == CertificateSpec::Analytic {
                    return Err(Error::Config("the quadrotor has no analytic certificate; use \"fitted\"".into()));
                }
            }
            PlantSpec::DoubleIntegrator { params } => {
                let ok = params.gain > 0.0 && params.rho > 0.0 && params.beta > 0.0 && params.speed_bound > 0.0;
                if !ok {
                    return Err(Error::Config("double integrator gain, rho, beta and speed_bound must be positive".into()));
                }
            }
        }
        match self.nominal {
            NominalSpec::Goal { goal, gain, max_speed } => {
                if !(gain > 0.0) || goal.iter().any(|g| !g.is_finite()) || max_speed.is_some_and(|s| !(s > 0.0)) {
                    return Err(Error::Config(format!("invalid goal controller {:?}", self.nominal)));
                }
            }
            NominalSpec::Constant { velocity } => {
                if velocity.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Config("constant velocity must be finite".into()));
                }
            }
        }
        if let CertificateSpec::Fitted { rollouts, horizon, dt, stride, beta_samples } = self.certificate {
            if rollouts == 0 || stride == 0 || beta_samples == 0 || !(dt > 0.0 && horizon >= dt) {
                return Err(Error::Config(format!("invalid fitted certificate settings {:?}", self.certificate)));
            }
        }
        check(self.rollout.validate())?;
        let n = match self.plant.kind() {
            PlantKind::Quadrotor => crate::plants::quadrotor::STATE_DIM,
            PlantKind::DoubleIntegrator => 4,
        };
        if self.rollout.initial_state.len() != n {
            return Err(Error::Config(format!(
                "initial_state has {} entries, {} expects {n}",
                self.rollout.initial_state.len(),
                self.plant.kind()
            )));
        }
        if self.certify.samples == 0 || self.certify.boundary_budget == 0 {
            return Err(Error::Config("certify samples and boundary_budget must be positive".into()));
        }
        if let Some(sweep) = &self.sweep {
            for &v in &sweep.values {
                check(sweep.parameter.apply(&self.gains, v).validate())?;
            }
        }
        Ok(())
    }

    /// `(label, gains)` per sweep item; a config without a sweep yields one
    /// unlabeled item and an empty value list yields none.
    pub fn items(&self) -> Vec<(Option<String>, FilterGains)> {
        match &self.sweep {
            None => vec![(None, self.gains)],
            Some(s) => s
                .values
                .iter()
                .map(|&v| (Some(format!("{}_{v}", s.parameter.name())), s.parameter.apply(&self.gains, v)))
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "plant": {"name": "double_integrator"},
        "obstacles": [{"center": [1.5, 0.0], "radius": 0.5}],
        "gains": {"alpha": 1.0, "epsilon": 2.0, "sigma": "omitted", "mu": 1.0},
        "nominal": {"type": "goal", "goal": [3.0, 0.0], "gain": 0.5},
        "certificate": {"source": "analytic"},
        "rollout": {"horizon": 1.0, "initial_state": [0.0, 0.0, 0.0, 0.0]}
    }"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = ExperimentConfig::from_json(MINIMAL).unwrap();
        assert_eq!(cfg.rollout.dt, 1e-3);
        assert_eq!(cfg.rollout.log_stride, 1);
        assert_eq!(cfg.smooth_kappa, 1000.0);
        assert_eq!(cfg.plant, PlantSpec::DoubleIntegrator { params: DoubleIntegratorParams::default() });
        assert_eq!(cfg.items().len(), 1);
        let back: ExperimentConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = MINIMAL.replacen("\"obstacles\"", "\"colour\": 1, \"obstacles\"", 1);
        assert!(matches!(ExperimentConfig::from_json(&bad), Err(Error::Config(_))));
        let bad = MINIMAL.replace("\"mu\": 1.0", "\"mu\": 1.0, \"nu\": 2.0");
        assert!(matches!(ExperimentConfig::from_json(&bad), Err(Error::Config(_))));
        let bad = MINIMAL.replace("double_integrator", "hopper");
        assert!(matches!(ExperimentConfig::from_json(&bad), Err(Error::Config(_))));
    }

    #[test]
    fn semantic_errors_are_config_errors() {
        for (from, to) in [
            ("\"radius\": 0.5", "\"radius\": -0.5"),
            ("\"alpha\": 1.0", "\"alpha\": 0.0"),
            ("[0.0, 0.0, 0.0, 0.0]", "[0.0, 0.0]"),
            ("\"horizon\": 1.0", "\"horizon\": 0.0"),
            ("{\"name\": \"double_integrator\"}", "{\"name\": \"quadrotor\"}"),
        ] {
            let bad = MINIMAL.replace(from, to);
            assert!(matches!(ExperimentConfig::from_json(&bad), Err(Error::Config(_))), "{to}");
        }
    }

    #[test]
    fn sweep_items() {
        let text = MINIMAL.replacen('{', "{\"sweep\": {\"parameter\": \"alpha\", \"values\": [0.25, 2.0]},", 1);
        let cfg = ExperimentConfig::from_json(&text).unwrap();
        let items = cfg.items();
        assert_eq!(items.len(), 2);
        assert_eq!(items[0].0.as_deref(), Some("alpha_0.25"));
        assert_eq!(items[1].1.alpha, 2.0);
        assert_eq!(items[1].1.epsilon, 2.0);
        let empty = MINIMAL.replacen('{', "{\"sweep\": {\"parameter\": \"mu\", \"values\": []},", 1);
        assert!(ExperimentConfig::from_json(&empty).unwrap().items().is_empty());
        let bad = MINIMAL.replacen('{', "{\"sweep\": {\"parameter\": \"mu\", \"values\": [-1.0]},", 1);
        assert!(ExperimentConfig::from_json(&bad).is_err());
    }

    #[test]
    fn sigma_sweep_sets_value() {
        let g = SweepParameter::Sigma.apply(&FilterGains::new(1.0, 2.0, Sigma::Omitted, 1.0).unwrap(), 3.0);
        assert_eq!(g.sigma, Sigma::Value(3.0));
    }
}
