//! Composite barrier `B(x) = h(π(x)) − V(x)/μ` for the full-order system.
//!
//! With `c_δ = (1/α)(σδ²/4 + ι/μ)` the inflated barrier is `B_δ = B + c_δ` and
//! the auxiliary barrier is `B_β = β − V`. Under the gain condition
//! `λ ≥ α + εμ/(4ρ)` the set `W = {B_δ ≥ 0} ∩ {B_β ≥ 0}` is forward invariant
//! for the closed loop `ẋ = F(x, k(x))`. [`certify_invariance`] probes that
//! claim on sampled boundary points of `W` through the inequalities
//! `Ḃ_δ > −αB_δ` and `Ḃ_β > −λB_β`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cbf::{FilterGains, ReducedCbf, Sigma};
use crate::rom::RomSystem;
use crate::sampling;
use crate::simfun::{bisect_exit, SimulationCertificate};
use crate::{Error, Result, Vector};

/// Points with `|B_i| ≤ BOUNDARY_TOL` count as lying on face `i` of `∂W`.
pub const BOUNDARY_TOL: f64 = 1e-3;
/// The strict differential inequalities must hold with at least this margin.
pub const STRICT_MARGIN: f64 = 1e-7;
/// Multiplier applied to the sampled supremum of `‖d‖`.
pub const DELTA_SAFETY_FACTOR: f64 = 1.1;

#[derive(Debug, Clone)]
pub struct CompositeBarrier {
    pub cbf: ReducedCbf,
    pub cert: SimulationCertificate,
    pub gains: FilterGains,
    /// Bound on `‖d(x)‖` over `Ω_β`.
    pub delta: f64,
}

impl CompositeBarrier {
    pub fn new(cbf: ReducedCbf, cert: SimulationCertificate, gains: FilterGains, delta: f64) -> Result<Self> {
        gains.validate()?;
        if !(delta >= 0.0 && delta.is_finite()) {
            return Err(Error::InvalidArgument(format!("δ must be nonnegative, got {delta}")));
        }
        if gains.sigma == Sigma::Omitted && delta > 0.0 {
            return Err(Error::InvalidArgument(format!(
                "σ omitted requires zero discrepancy bound, got δ = {delta}"
            )));
        }
        Ok(Self { cbf, cert, gains, delta })
    }

    /// `c_δ = (1/α)(σδ²/4 + ι/μ)`.
    pub fn inflation(&self) -> f64 {
        let sigma_term = match self.gains.sigma {
            Sigma::Omitted => 0.0,
            Sigma::Value(s) => s * self.delta * self.delta / 4.0,
        };
        (sigma_term + self.cert.iota() / self.gains.mu) / self.gains.alpha
    }

    pub fn barrier_b(&self, sys: &RomSystem, x: &Vector) -> f64 {
        self.cbf.value(&sys.project_state(x)) - self.cert.value(x) / self.gains.mu
    }

    pub fn barrier_b_delta(&self, sys: &RomSystem, x: &Vector) -> f64 {
        self.barrier_b(sys, x) + self.inflation()
    }

    pub fn barrier_b_beta(&self, x: &Vector) -> f64 {
        self.cert.beta() - self.cert.value(x)
    }

    /// `x ∈ W`.
    pub fn in_invariant_set(&self, sys: &RomSystem, x: &Vector) -> bool {
        self.barrier_b_delta(sys, x) >= 0.0 && self.barrier_b_beta(x) >= 0.0
    }

    /// `(Ḃ_δ, Ḃ_β)` along the closed loop at `x`, by the chain rule.
    pub fn derivatives(&self, sys: &RomSystem, x: &Vector) -> (f64, f64) {
        let y = sys.project_state(x);
        let f = sys.fom.eval(x, &self.cert.input(x));
        let vdot = self.cert.gradient(x).dot(&f);
        let hdot = self.cbf.gradient(&y).dot(&(sys.proj.state_jacobian(x) * &f));
        (hdot - vdot / self.gains.mu, -vdot)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainCheck {
    pub margin: f64,
    pub pass: bool,
}

/// `λ ≥ α + εμ/(4ρ)`; the margin is `λ − α − εμ/(4ρ)`, and zero passes.
pub fn gain_condition(cert: &SimulationCertificate, gains: &FilterGains) -> GainCheck {
    let margin = cert.lambda() - gains.alpha - gains.epsilon * gains.mu / (4.0 * cert.rho());
    GainCheck { margin, pass: margin >= 0.0 }
}

/// `δ ≈ 1.1 · max ‖d(x)‖` over low-discrepancy samples of the sampling region
/// that lie in `Ω_β`, with `d(x)` evaluated at `u = k(x)`, `v = ψ(x)`.
pub fn estimate_delta(sys: &RomSystem, cert: &SimulationCertificate, n_samples: usize, seed: u64) -> Result<f64> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument("estimate_delta needs at least one sample".into()));
    }
    let inside: Vec<Vector> = cert
        .region_samples(sys, n_samples, seed)?
        .into_iter()
        .filter(|x| cert.in_sublevel(x))
        .collect();
    if inside.is_empty() {
        return Err(Error::Inconclusive("no samples landed in Ω_β".into()));
    }
    let norms: Vec<f64> = inside
        .par_iter()
        .map(|x| sys.discrepancy(x, &cert.input(x), &sys.project_input(x)).norm())
        .collect();
    Ok(DELTA_SAFETY_FACTOR * norms.into_iter().fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvarianceStatus {
    Pass,
    Fail,
    /// No boundary points of `W` were found.
    Inconclusive,
    /// No sampled point lies in `W`.
    InconclusiveEmpty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub gain_margin: f64,
    pub delta: f64,
    pub c_delta: f64,
    /// Minimum of `Ḃ_δ + αB_δ` over points on the `B_δ` face.
    pub worst_bdelta_margin: Option<f64>,
    /// Minimum of `Ḃ_β + λB_β` over points on the `B_β` face.
    pub worst_bbeta_margin: Option<f64>,
    pub n_boundary_points: usize,
    pub status: InvarianceStatus,
}

/// Falsification-style evidence for forward invariance of `W`.
///
/// Interior points of `W` are drawn from the certificate's sampling region;
/// from each, a seeded random ray is marched until it leaves `W` and the exit
/// is refined by bisection. Rays that leave the sampling region first are
/// discarded. On each boundary point the active faces (`|B_i| ≤ 1e-3`) are
/// checked against the strict inequalities with threshold 1e-7. The status
/// is `Fail` whenever the gain condition fails, even if every sampled
/// boundary point satisfies its inequality.
pub fn certify_invariance(cb: &CompositeBarrier, sys: &RomSystem, boundary_budget: usize, seed: u64) -> Result<InvarianceReport> {
    let gain = gain_condition(&cb.cert, &cb.gains);
    let region = cb.cert.sampling_region();
    let mut report = InvarianceReport {
        gain_margin: gain.margin,
        delta: cb.delta,
        c_delta: cb.inflation(),
        worst_bdelta_margin: None,
        worst_bbeta_margin: None,
        n_boundary_points: 0,
        status: InvarianceStatus::Inconclusive,
    };

    let interior: Vec<Vector> = cb
        .cert
        .region_samples(sys, 4 * boundary_budget.max(1), seed)?
        .into_iter()
        .filter(|x| cb.in_invariant_set(sys, x))
        .collect();
    if interior.is_empty() {
        report.status = InvarianceStatus::InconclusiveEmpty;
        return Ok(report);
    }

    let widths = region.half_widths();
    let mut rng = sampling::rng(seed ^ 0x00c0_ffee);
    let rays: Vec<(usize, Vector)> = (0..boundary_budget)
        .map(|r| {
            let dir = Vector::from_iterator(widths.len(), widths.iter().map(|w| w * rng.gen_range(-1.0..1.0)));
            (r % interior.len(), dir)
        })
        .collect();

    // (B_δ-face margin, B_β-face margin) per boundary point found
    let hits: Vec<Option<(Option<f64>, Option<f64>)>> = rays
        .par_iter()
        .map(|(i, dir)| {
            let x0 = &interior[*i];
            let point = |s: f64| {
                let mut x = x0 + dir * s;
                sys.fom.normalize(&mut x);
                x
            };
            let inside = |s: f64| {
                let x = point(s);
                region.contains(&x) && cb.in_invariant_set(sys, &x)
            };
            let x = point(bisect_exit(inside, 1.0)?);
            let bd = cb.barrier_b_delta(sys, &x);
            let bb = cb.barrier_b_beta(&x);
            let on_delta = bd.abs() <= BOUNDARY_TOL;
            let on_beta = bb.abs() <= BOUNDARY_TOL;
            if !(on_delta || on_beta) {
                return None;
            }
            let (bd_dot, bb_dot) = cb.derivatives(sys, &x);
            Some((
                on_delta.then_some(bd_dot + cb.gains.alpha * bd),
                on_beta.then(|| bb_dot + cb.cert.lambda() * bb),
            ))
        })
        .collect();

    let fold_min = |acc: Option<f64>, v: Option<f64>| match (acc, v) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    };
    for (d, b) in hits.into_iter().flatten() {
        report.n_boundary_points += 1;
        report.worst_bdelta_margin = fold_min(report.worst_bdelta_margin, d);
        report.worst_bbeta_margin = fold_min(report.worst_bbeta_margin, b);
    }
    if report.n_boundary_points == 0 {
        return Ok(report);
    }
    let holds = |m: Option<f64>| m.is_none_or(|m| m > STRICT_MARGIN);
    report.status = if gain.pass && holds(report.worst_bdelta_margin) && holds(report.worst_bbeta_margin) {
        InvarianceStatus::Pass
    } else {
        InvarianceStatus::Fail
    };
    Ok(report)
}
