use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, PlantSpec};
use super::runner::arena_cbf;
use crate::cbf::{safety_filter, FilterGains};
use crate::plants::double_integrator::double_integrator_fom;
use crate::plants::single_integrator_rom;
use crate::sim::integrate;
use crate::{numdiff, Error, Matrix, Result, Vector};

/// Timestamped desired planar velocities, linearly interpolated and held
/// constant outside the scripted interval.
#[derive(Debug, Clone, PartialEq)]
pub struct CommandScript {
    times: Vec<f64>,
    commands: Vec<[f64; 2]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CommandRow {
    t: f64,
    vx_desired: f64,
    vy_desired: f64,
}

impl CommandScript {
    pub fn new(times: Vec<f64>, commands: Vec<[f64; 2]>) -> Result<Self> {
        if times.is_empty() || times.len() != commands.len() {
            return Err(Error::Config("command script needs at least one row".into()));
        }
        if times.iter().chain(commands.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::Config("command script contains non-finite values".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("command times must be strictly increasing".into()));
        }
        Ok(Self { times, commands })
    }

    /// CSV with header `t,vx_desired,vy_desired`.
    pub fn from_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let header = rdr.headers().map_err(|e| Error::Config(format!("command file: {e}")))?;
        if header.iter().map(str::trim).ne(["t", "vx_desired", "vy_desired"]) {
            return Err(Error::Config(format!("command file header must be t,vx_desired,vy_desired, got {header:?}")));
        }
        let mut times = Vec::new();
        let mut commands = Vec::new();
        for (i, row) in rdr.deserialize::<CommandRow>().enumerate() {
            let row = row.map_err(|e| Error::Config(format!("command file row {}: {e}", i + 1)))?;
            times.push(row.t);
            commands.push([row.vx_desired, row.vy_desired]);
        }
        Self::new(times, commands)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_reader(file).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn at(&self, t: f64) -> [f64; 2] {
        let i = self.times.partition_point(|&s| s <= t);
        if i == 0 {
            return self.commands[0];
        }
        if i == self.times.len() {
            return self.commands[i - 1];
        }
        let (t0, t1) = (self.times[i - 1], self.times[i]);
        let w = (t - t0) / (t1 - t0);
        let (a, b) = (self.commands[i - 1], self.commands[i]);
        [a[0] + w * (b[0] - a[0]), a[1] + w * (b[1] - a[1])]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReplayRow {
    pub t: f64,
    pub px: f64,
    pub py: f64,
    pub xdot_safe: f64,
    pub ydot_safe: f64,
    pub xdot: f64,
    pub ydot: f64,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplaySummary {
    pub alpha: f64,
    pub min_h: f64,
    pub safe: bool,
    pub max_tracking_error: f64,
    pub diverged: bool,
}

/// Replays a command script through the filtered single-integrator arena,
/// with the double integrator under its backstepping interface as the
/// tracking proxy. Writes `replay.csv` and `summary.json` when `out` is set.
pub fn run_replay(cfg: &ExperimentConfig, script: &CommandScript, out: Option<&Path>) -> Result<(Vec<ReplayRow>, ReplaySummary)> {
    let PlantSpec::DoubleIntegrator { params } = cfg.plant else {
        return Err(Error::Config("replay runs on the double_integrator proxy plant".into()));
    };
    let gains: FilterGains = cfg.gains;
    let cbf = arena_cbf(cfg)?;
    let rom = single_integrator_rom();
    let safe = |t: f64, y: &Vector| -> Vector {
        let cmd = Vector::from_column_slice(&script.at(t));
        safety_filter(&cbf, &rom, &gains, &move |_: &Vector| cmd.clone(), y)
            .unwrap_or_else(|_| Vector::from_element(2, f64::NAN))
    };
    let fom = double_integrator_fom();
    let k = params.gain;
    // ė = −K e for e = v − κ(t, y), including the explicit time dependence
    let field = |t: f64, x: &Vector| {
        let y = x.rows(0, 2).into_owned();
        let v = x.rows(2, 2).into_owned();
        let kap = safe(t, &y);
        let jac: Matrix = numdiff::jacobian(|z| safe(t, z), &y);
        let ht = 1e-6;
        let dkdt = (safe(t + ht, &y) - safe((t - ht).max(0.0), &y)) / (t + ht - (t - ht).max(0.0));
        let u = jac * &v + dkdt - (&v - &kap) * k;
        fom.eval(x, &u)
    };
    let x0 = Vector::from_column_slice(&cfg.rollout.initial_state);
    let (samples, diverged) = match integrate(&fom, &field, &x0, cfg.rollout.dt, cfg.rollout.steps(), cfg.rollout.log_stride) {
        Ok(s) => (s, false),
        Err((_, s)) => (s, true),
    };
    let rows: Vec<ReplayRow> = samples
        .iter()
        .map(|(t, x)| {
            let y = x.rows(0, 2).into_owned();
            let s = safe(*t, &y);
            ReplayRow {
                t: *t,
                px: x[0],
                py: x[1],
                xdot_safe: s[0],
                ydot_safe: s[1],
                xdot: x[2],
                ydot: x[3],
                h: cbf.value(&y),
            }
        })
        .collect();
    let min_h = rows.iter().map(|r| r.h).fold(f64::INFINITY, f64::min);
    let max_tracking_error = rows
        .iter()
        .map(|r| (r.xdot - r.xdot_safe).hypot(r.ydot - r.ydot_safe))
        .fold(0.0, f64::max);
    let summary = ReplaySummary { alpha: gains.alpha, min_h, safe: min_h >= 0.0, max_tracking_error, diverged };
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_path(dir.join("replay.csv"))?;
        for r in &rows {
            w.serialize(r)?;
        }
        w.flush()?;
        let mut text = serde_json::to_string_pretty(&summary)?;
        text.push('\n');
        std::fs::write(dir.join("summary.json"), text)?;
    }
    Ok((rows, summary))
}
