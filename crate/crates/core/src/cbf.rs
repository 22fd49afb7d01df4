//! Reduced-order control barrier functions and the input-to-state safe filter.
//!
//! The filter solves `argmin ½‖v − κ_d(y)‖²` subject to the single affine
//! constraint
//!
//! ```text
//! L_f h(y) + L_g h(y) v ≥ −α h(y) + (1/ε)‖L_g h(y)‖² + (1/σ)‖∇h(y)‖²
//! ```
//!
//! in closed form as a Euclidean projection onto a half-space. Several
//! barriers are merged into one with a log-sum-exp soft minimum.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::rom::{ReducedController, ReducedOrderModel, ScalarMap, VectorMap};
use crate::{numdiff, Error, Result, Vector};

/// Normals shorter than this make an active constraint infeasible.
pub const DEGENERATE_NORMAL: f64 = 1e-12;

#[derive(Clone)]
pub struct ReducedCbf {
    name: String,
    value: ScalarMap,
    gradient: VectorMap,
}

impl ReducedCbf {
    pub fn new<H, G>(name: impl Into<String>, value: H, gradient: G) -> Self
    where
        H: Fn(&Vector) -> f64 + Send + Sync + 'static,
        G: Fn(&Vector) -> Vector + Send + Sync + 'static,
    {
        Self { name: name.into(), value: Arc::new(value), gradient: Arc::new(gradient) }
    }

    /// Barrier with a central-difference gradient.
    pub fn from_value<H>(name: impl Into<String>, value: H) -> Self
    where
        H: Fn(&Vector) -> f64 + Send + Sync + 'static,
    {
        let value: ScalarMap = Arc::new(value);
        let v = Arc::clone(&value);
        Self { name: name.into(), value, gradient: Arc::new(move |y| numdiff::gradient(|z| v(z), y)) }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn value(&self, y: &Vector) -> f64 {
        (self.value)(y)
    }

    pub fn gradient(&self, y: &Vector) -> Vector {
        (self.gradient)(y)
    }

    /// `(L_f h(y), L_g h(y))`, with `L_g h` returned as a length-`m` vector.
    pub fn lie_derivatives(&self, rom: &ReducedOrderModel, y: &Vector) -> (f64, Vector) {
        let grad = self.gradient(y);
        (grad.dot(&rom.drift(y)), rom.actuation(y).tr_mul(&grad))
    }
}

impl fmt::Debug for ReducedCbf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ReducedCbf").field("name", &self.name).finish_non_exhaustive()
    }
}

/// `h(y) = ‖y − center‖² − radius²`.
pub fn circular_obstacle_cbf(center: &[f64], radius: f64) -> Result<ReducedCbf> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidArgument(format!("obstacle radius must be positive, got {radius}")));
    }
    let c = Vector::from_column_slice(center);
    let cg = c.clone();
    let r2 = radius * radius;
    Ok(ReducedCbf::new(
        format!("circle({center:?}, r={radius})"),
        move |y| (y - &c).norm_squared() - r2,
        move |y| (y - &cg) * 2.0,
    ))
}

/// Soft minimum `h = −(1/κ_s) ln Σ exp(−κ_s h_i)`, so that `h ≤ min_i h_i`
/// and `min_i h_i − h ≤ ln(count)/κ_s`.
pub fn smooth_combine(cbfs: &[ReducedCbf], kappa_smooth: f64) -> Result<ReducedCbf> {
    if cbfs.is_empty() {
        return Err(Error::InvalidArgument("smooth_combine needs at least one barrier".into()));
    }
    if !(kappa_smooth > 0.0 && kappa_smooth.is_finite()) {
        return Err(Error::InvalidArgument(format!("smoothing gain must be positive, got {kappa_smooth}")));
    }
    if cbfs.len() == 1 {
        return Ok(cbfs[0].clone());
    }
    let parts: Arc<[ReducedCbf]> = cbfs.to_vec().into();
    let pv = Arc::clone(&parts);
    let name = format!(
        "softmin[{}](κ={kappa_smooth})",
        cbfs.iter().map(ReducedCbf::name).collect::<Vec<_>>().join(", ")
    );
    Ok(ReducedCbf::new(
        name,
        move |y| {
            let values: Vec<f64> = pv.iter().map(|c| c.value(y)).collect();
            let m = values.iter().copied().fold(f64::INFINITY, f64::min);
            let sum: f64 = values.iter().map(|h| (-kappa_smooth * (h - m)).exp()).sum();
            m - sum.ln() / kappa_smooth
        },
        move |y| {
            let values: Vec<f64> = parts.iter().map(|c| c.value(y)).collect();
            let m = values.iter().copied().fold(f64::INFINITY, f64::min);
            let weights: Vec<f64> = values.iter().map(|h| (-kappa_smooth * (h - m)).exp()).collect();
            let total: f64 = weights.iter().sum();
            parts
                .iter()
                .zip(&weights)
                .fold(Vector::zeros(y.len()), |acc, (c, w)| acc + c.gradient(y) * (w / total))
        },
    ))
}

/// `σ` either takes a value or its term is dropped from the filter constraint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sigma {
    Omitted,
    Value(f64),
}

impl Sigma {
    /// `1/σ`, zero when omitted.
    pub fn inverse(self) -> f64 {
        match self {
            Sigma::Omitted => 0.0,
            Sigma::Value(s) => 1.0 / s,
        }
    }
}

impl Serialize for Sigma {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Sigma::Omitted => s.serialize_str("omitted"),
            Sigma::Value(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for Sigma {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Sigma::Value(v)),
            Raw::Word(w) if w == "omitted" => Ok(Sigma::Omitted),
            Raw::Word(w) => Err(serde::de::Error::custom(format!("sigma must be a number or \"omitted\", got {w:?}"))),
        }
    }
}

/// Filter constants `α, ε, σ` and the composite-barrier weight `μ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterGains {
    pub alpha: f64,
    pub epsilon: f64,
    pub sigma: Sigma,
    pub mu: f64,
}

impl FilterGains {
    pub fn new(alpha: f64, epsilon: f64, sigma: Sigma, mu: f64) -> Result<Self> {
        let g = Self { alpha, epsilon, sigma, mu };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")))
            }
        };
        positive("alpha", self.alpha)?;
        positive("epsilon", self.epsilon)?;
        positive("mu", self.mu)?;
        if let Sigma::Value(s) = self.sigma {
            positive("sigma", s)?;
        }
        Ok(())
    }
}

/// Half-space `{v : normal·v ≥ offset}`.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfSpace {
    pub normal: Vector,
    pub offset: f64,
}

impl HalfSpace {
    pub fn slack(&self, v: &Vector) -> f64 {
        self.normal.dot(v) - self.offset
    }

    /// Euclidean projection; points already inside are returned unchanged.
    pub fn project(&self, v: &Vector) -> Option<Vector> {
        let slack = self.slack(v);
        if slack >= 0.0 {
            return Some(v.clone());
        }
        let nn = self.normal.norm_squared();
        if nn.sqrt() <= DEGENERATE_NORMAL {
            return None;
        }
        Some(v + &self.normal * (-slack / nn))
    }
}

/// The filter constraint at `y` as a half-space in `v`: normal `L_g h(y)`,
/// offset `−αh + ‖L_g h‖²/ε + ‖∇h‖²/σ − L_f h + margin`.
pub fn issf_constraint(cbf: &ReducedCbf, rom: &ReducedOrderModel, gains: &FilterGains, y: &Vector, margin: f64) -> HalfSpace {
    let grad = cbf.gradient(y);
    let lfh = grad.dot(&rom.drift(y));
    let lgh = rom.actuation(y).tr_mul(&grad);
    let offset = -gains.alpha * cbf.value(y) + lgh.norm_squared() / gains.epsilon
        + gains.sigma.inverse() * grad.norm_squared()
        - lfh
        + margin;
    HalfSpace { normal: lgh, offset }
}

/// `L_f h + L_g h·v + αh − (1/ε)‖L_g h‖² − (1/σ)‖∇h‖²`; positive means the
/// condition holds strictly at `(y, v)`.
pub fn issf_residual(cbf: &ReducedCbf, rom: &ReducedOrderModel, gains: &FilterGains, y: &Vector, v: &Vector) -> f64 {
    issf_constraint(cbf, rom, gains, y, 0.0).slack(v)
}

/// Minimally invasive filter of the nominal command `κ_d(y)`.
///
/// When the constraint is exactly active at `κ_d(y)` the nominal command
/// passes through.
pub fn safety_filter(
    cbf: &ReducedCbf,
    rom: &ReducedOrderModel,
    gains: &FilterGains,
    kappa_d: &dyn ReducedController,
    y: &Vector,
) -> Result<Vector> {
    filter_with_margin(cbf, rom, gains, kappa_d, y, 0.0)
}

fn filter_with_margin(
    cbf: &ReducedCbf,
    rom: &ReducedOrderModel,
    gains: &FilterGains,
    kappa_d: &dyn ReducedController,
    y: &Vector,
    margin: f64,
) -> Result<Vector> {
    let nominal = kappa_d.eval(y);
    let hs = issf_constraint(cbf, rom, gains, y, margin);
    hs.project(&nominal).ok_or_else(|| Error::InfeasibleFilter {
        y: y.iter().copied().collect(),
        lgh_norm: hs.normal.norm(),
    })
}

/// The safety filter packaged as a reduced-order controller `κ`.
///
/// At degenerate points (active constraint, vanishing `L_g h`) the controller
/// returns NaN, which a rollout reports as divergence.
#[derive(Clone)]
pub struct SafetyFilter {
    pub cbf: ReducedCbf,
    pub rom: ReducedOrderModel,
    pub gains: FilterGains,
    pub nominal: Arc<dyn ReducedController>,
    /// Extra offset `η ≥ 0` added to the constraint.
    pub margin: f64,
}

impl SafetyFilter {
    pub fn new(cbf: ReducedCbf, rom: ReducedOrderModel, gains: FilterGains, nominal: Arc<dyn ReducedController>) -> Self {
        Self { cbf, rom, gains, nominal, margin: 0.0 }
    }

    pub fn with_margin(mut self, margin: f64) -> Self {
        assert!(margin >= 0.0, "strictness margin must be nonnegative");
        self.margin = margin;
        self
    }

    pub fn filter(&self, y: &Vector) -> Result<Vector> {
        filter_with_margin(&self.cbf, &self.rom, &self.gains, self.nominal.as_ref(), y, self.margin)
    }

    /// Whether the barrier constraint modifies the nominal command at `y`.
    pub fn is_active(&self, y: &Vector) -> bool {
        issf_constraint(&self.cbf, &self.rom, &self.gains, y, self.margin).slack(&self.nominal.eval(y)) < 0.0
    }
}

impl ReducedController for SafetyFilter {
    fn eval(&self, y: &Vector) -> Vector {
        self.filter(y).unwrap_or_else(|_| Vector::from_element(self.rom.input_dim(), f64::NAN))
    }
}

impl fmt::Debug for SafetyFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SafetyFilter")
            .field("cbf", &self.cbf)
            .field("gains", &self.gains)
            .field("margin", &self.margin)
            .finish_non_exhaustive()
    }
}
