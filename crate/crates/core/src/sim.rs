//! Fixed-step RK4 rollouts of the closed loop `ẋ = F(x, k(x))`.
//!
//! The interface is evaluated at every Runge–Kutta stage so the closed loop
//! keeps fourth-order accuracy. Plants that declare a normalizer (quaternion
//! states) are renormalized after each step.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::composite::CompositeBarrier;
use crate::rom::{FullOrderModel, ReducedController, RomSystem};
use crate::{Error, Result, Vector};

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RolloutConfig {
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub horizon: f64,
    pub initial_state: Vec<f64>,
    #[serde(default = "default_stride")]
    pub log_stride: usize,
}

fn default_dt() -> f64 {
    1e-3
}

fn default_stride() -> usize {
    1
}

impl RolloutConfig {
    pub fn new(dt: f64, horizon: f64, initial_state: Vec<f64>, log_stride: usize) -> Self {
        Self { dt, horizon, initial_state, log_stride }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.horizon >= self.dt && self.horizon.is_finite()) {
            return Err(Error::InvalidArgument(format!("horizon {} shorter than dt {}", self.horizon, self.dt)));
        }
        if self.log_stride == 0 {
            return Err(Error::InvalidArgument("log_stride must be positive".into()));
        }
        if self.initial_state.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("initial state must be finite".into()));
        }
        Ok(())
    }

    /// Number of integration steps, `round(horizon / dt)`.
    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }
}

/// One logged sample.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub x: Vector,
    pub y: Vector,
    pub v: Vector,
    pub u: Vector,
    pub h: f64,
    pub value: f64,
    pub b: f64,
    pub b_delta: f64,
    pub b_beta: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RolloutLog {
    pub rows: Vec<LogRow>,
}

/// Scalar columns addressable by [`min_over_rollout`].
pub const SCALAR_COLUMNS: [&str; 7] = ["t", "h", "V", "B", "Bdelta", "Bbeta", "residual"];

impl RolloutLog {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn last(&self) -> Option<&LogRow> {
        self.rows.last()
    }

    /// A scalar column by CSV name, or `x_3`-style component of a vector column.
    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let pick: Box<dyn Fn(&LogRow) -> f64> = match name {
            "t" => Box::new(|r| r.t),
            "h" => Box::new(|r| r.h),
            "V" => Box::new(|r| r.value),
            "B" => Box::new(|r| r.b),
            "Bdelta" => Box::new(|r| r.b_delta),
            "Bbeta" => Box::new(|r| r.b_beta),
            "residual" => Box::new(|r| r.residual),
            other => {
                let (prefix, idx) = other
                    .split_once('_')
                    .and_then(|(p, i)| i.parse::<usize>().ok().map(|i| (p, i)))
                    .ok_or_else(|| Error::InvalidArgument(format!("unknown column {other:?}")))?;
                let get: fn(&LogRow) -> &Vector = match prefix {
                    "x" => |r| &r.x,
                    "y" => |r| &r.y,
                    "v" => |r| &r.v,
                    "u" => |r| &r.u,
                    _ => return Err(Error::InvalidArgument(format!("unknown column {other:?}"))),
                };
                if self.rows.first().is_some_and(|r| idx >= get(r).len()) {
                    return Err(Error::InvalidArgument(format!("unknown column {other:?}")));
                }
                Box::new(move |r| get(r)[idx])
            }
        };
        Ok(self.rows.iter().map(pick).collect())
    }

    pub fn header(&self) -> Vec<String> {
        let Some(first) = self.rows.first() else {
            return Vec::new();
        };
        let mut cols = vec!["t".to_string()];
        for (prefix, vec) in [("x", &first.x), ("y", &first.y), ("v", &first.v), ("u", &first.u)] {
            cols.extend((0..vec.len()).map(|i| format!("{prefix}_{i}")));
        }
        cols.extend(["h", "V", "B", "Bdelta", "Bbeta", "residual"].map(String::from));
        cols
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(self.header())?;
        for r in &self.rows {
            let mut rec = vec![r.t];
            for vec in [&r.x, &r.y, &r.v, &r.u] {
                rec.extend(vec.iter().copied());
            }
            rec.extend([r.h, r.value, r.b, r.b_delta, r.b_beta, r.residual]);
            w.write_record(rec.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// One classic RK4 step of `ẋ = field(t, x)`.
pub fn rk4_step(field: &dyn Fn(f64, &Vector) -> Vector, t: f64, x: &Vector, dt: f64) -> Vector {
    let k1 = field(t, x);
    let k2 = field(t + 0.5 * dt, &(x + &k1 * (0.5 * dt)));
    let k3 = field(t + 0.5 * dt, &(x + &k2 * (0.5 * dt)));
    let k4 = field(t + dt, &(x + &k3 * dt));
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}

/// Integrates `ẋ = field(t, x)` for `steps` steps from `x0`, renormalizing with
/// the model's normalizer, and returns `(t, x)` every `stride` steps plus the
/// final one.
///
/// On a non-finite state the samples collected so far are returned in the
/// error position together with the failure time.
pub fn integrate(
    fom: &FullOrderModel,
    field: &dyn Fn(f64, &Vector) -> Vector,
    x0: &Vector,
    dt: f64,
    steps: usize,
    stride: usize,
) -> std::result::Result<Vec<(f64, Vector)>, (f64, Vec<(f64, Vector)>)> {
    let stride = stride.max(1);
    let mut out = vec![(0.0, x0.clone())];
    let mut x = x0.clone();
    for i in 1..=steps {
        let t0 = (i - 1) as f64 * dt;
        let mut next = rk4_step(field, t0, &x, dt);
        fom.normalize(&mut next);
        let t = i as f64 * dt;
        if next.iter().any(|v| !v.is_finite()) {
            return Err((t, out));
        }
        x = next;
        if i % stride == 0 || i == steps {
            out.push((t, x.clone()));
        }
    }
    Ok(out)
}

/// States along the closed loop `ẋ = F(x, k(x))` without certificate logging.
pub fn closed_loop_states(
    fom: &FullOrderModel,
    interface: &dyn crate::simfun::Interface,
    x0: &Vector,
    dt: f64,
    steps: usize,
    stride: usize,
) -> Result<Vec<Vector>> {
    let field = |_: f64, x: &Vector| fom.eval(x, &interface.input(x));
    integrate(fom, &field, x0, dt, steps, stride)
        .map(|s| s.into_iter().map(|(_, x)| x).collect())
        .map_err(|(t, _)| Error::InvalidArgument(format!("closed loop diverged at t = {t}")))
}

fn log_row(sys: &RomSystem, kappa: &dyn ReducedController, cb: &CompositeBarrier, t: f64, x: &Vector) -> LogRow {
    let y = sys.project_state(x);
    let v = sys.project_input(x);
    let u = cb.cert.input(x);
    let h = cb.cbf.value(&y);
    let value = cb.cert.value(x);
    let b = h - value / cb.gains.mu;
    let residual = (&v - kappa.eval(&y)).norm();
    LogRow {
        t,
        x: x.clone(),
        y,
        v,
        u,
        h,
        value,
        b,
        b_delta: b + cb.inflation(),
        b_beta: cb.cert.beta() - value,
        residual,
    }
}

/// Closed-loop rollout under the certificate's interface, logging every
/// certificate quantity.
pub fn rollout(sys: &RomSystem, kappa: &dyn ReducedController, cb: &CompositeBarrier, cfg: &RolloutConfig) -> Result<RolloutLog> {
    cfg.validate()?;
    if cfg.initial_state.len() != sys.fom.state_dim() {
        return Err(Error::InvalidArgument(format!(
            "initial state has {} entries, plant expects {}",
            cfg.initial_state.len(),
            sys.fom.state_dim()
        )));
    }
    let interface = cb.cert.interface();
    let field = |_: f64, x: &Vector| sys.fom.eval(x, &interface.input(x));
    let x0 = Vector::from_column_slice(&cfg.initial_state);
    let to_log = |samples: Vec<(f64, Vector)>| RolloutLog {
        rows: samples.iter().map(|(t, x)| log_row(sys, kappa, cb, *t, x)).collect(),
    };
    match integrate(&sys.fom, &field, &x0, cfg.dt, cfg.steps(), cfg.log_stride) {
        Ok(samples) => Ok(to_log(samples)),
        Err((t, samples)) => Err(Error::RolloutDiverged { t, log: Box::new(to_log(samples)) }),
    }
}

/// `(t*, min)` of a column, with `t*` the first time the minimum is attained.
pub fn min_over_rollout(log: &RolloutLog, column: &str) -> Result<(f64, f64)> {
    if log.is_empty() {
        return Err(Error::InvalidArgument("empty rollout log".into()));
    }
    let values = log.column(column)?;
    let mut best = (log.rows[0].t, values[0]);
    for (row, &v) in log.rows.iter().zip(&values).skip(1) {
        if v < best.1 {
            best = (row.t, v);
        }
    }
    Ok(best)
}
