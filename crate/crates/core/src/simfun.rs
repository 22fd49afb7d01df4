//! Simulation functions: Lyapunov-like certificates that an interface `k`
//! drives the full-order state toward the reduced-order surface
//! `ψ(x) = κ(π(x))`.
//!
//! A certificate bundles `V`, its gradient, the interface and the constants
//! `(ρ, λ, ι, β)`:
//!
//! ```text
//! V(x) ≥ ρ‖ψ(x) − κ(π(x))‖²
//! ∇V(x)·F(x, k(x)) ≤ −λV(x) + ι          on D, with β > ι/λ
//! ```
//!
//! All checks here are sampling-based falsification, not proofs.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rom::{ReducedController, RomSystem, ScalarMap, VectorMap};
use crate::sampling::{self, DomainBox, Halton};
use crate::{numdiff, Error, Result, Vector};

/// Tolerance for the lower-bound check `V ≥ ρ‖residual‖²`.
pub const LOWER_BOUND_TOL: f64 = 1e-9;
/// Slack for the decrease check, covering finite-difference gradients.
pub const DECREASE_TOL: f64 = 1e-7;
/// Width of the shell `|V − β| ≤ tol` treated as the boundary of `Ω_β`.
pub const LEVEL_SET_TOL: f64 = 1e-3;
/// Minimum gradient norm for `β` to count as a regular value.
pub const REGULAR_GRADIENT_MIN: f64 = 1e-6;

/// Full-order controller `k: R^N → R^M` refining reduced-order commands.
pub trait Interface: Send + Sync {
    fn input(&self, x: &Vector) -> Vector;
}

impl<F> Interface for F
where
    F: Fn(&Vector) -> Vector + Send + Sync,
{
    fn input(&self, x: &Vector) -> Vector {
        self(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertificateConstants {
    pub rho: f64,
    pub lambda: f64,
    pub iota: f64,
    pub beta: f64,
}

impl CertificateConstants {
    pub fn validate(&self) -> Result<()> {
        let Self { rho, lambda, iota, beta } = *self;
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::InvalidCertificate(format!("ρ must be positive, got {rho}")));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidCertificate(format!("λ must be positive, got {lambda}")));
        }
        if !(iota >= 0.0 && iota.is_finite()) {
            return Err(Error::InvalidCertificate(format!("ι must be nonnegative, got {iota}")));
        }
        if !(beta > iota / lambda) {
            return Err(Error::InvalidCertificate(format!(
                "β = {beta} must exceed ι/λ = {}",
                iota / lambda
            )));
        }
        Ok(())
    }
}

#[derive(Clone)]
pub struct SimulationCertificate {
    value: ScalarMap,
    gradient: Option<VectorMap>,
    interface: Arc<dyn Interface>,
    constants: CertificateConstants,
    domain: DomainBox,
    sampling_region: DomainBox,
}

impl SimulationCertificate {
    /// `domain` is `D` (bounds may be infinite); `sampling_region` is the
    /// finite box used by every sampling-based check.
    pub fn new<V>(
        value: V,
        interface: Arc<dyn Interface>,
        constants: CertificateConstants,
        domain: DomainBox,
        sampling_region: DomainBox,
    ) -> Result<Self>
    where
        V: Fn(&Vector) -> f64 + Send + Sync + 'static,
    {
        constants.validate()?;
        if domain.dim() != sampling_region.dim() {
            return Err(Error::InvalidArgument("domain and sampling region dimensions differ".into()));
        }
        if !sampling_region.is_finite() {
            return Err(Error::InvalidArgument("sampling region must be bounded".into()));
        }
        Ok(Self { value: Arc::new(value), gradient: None, interface, constants, domain, sampling_region })
    }

    pub fn with_gradient<G>(mut self, gradient: G) -> Self
    where
        G: Fn(&Vector) -> Vector + Send + Sync + 'static,
    {
        self.gradient = Some(Arc::new(gradient));
        self
    }

    /// Same `V`, gradient, interface and region with different constants.
    pub fn with_constants(&self, constants: CertificateConstants) -> Result<Self> {
        constants.validate()?;
        Ok(Self { constants, ..self.clone() })
    }

    pub fn value(&self, x: &Vector) -> f64 {
        (self.value)(x)
    }

    pub fn gradient(&self, x: &Vector) -> Vector {
        match &self.gradient {
            Some(g) => g(x),
            None => numdiff::gradient(|z| self.value(z), x),
        }
    }

    pub fn has_analytic_gradient(&self) -> bool {
        self.gradient.is_some()
    }

    pub fn input(&self, x: &Vector) -> Vector {
        self.interface.input(x)
    }

    pub fn interface(&self) -> Arc<dyn Interface> {
        Arc::clone(&self.interface)
    }

    pub fn constants(&self) -> CertificateConstants {
        self.constants
    }

    pub fn rho(&self) -> f64 {
        self.constants.rho
    }

    pub fn lambda(&self) -> f64 {
        self.constants.lambda
    }

    pub fn iota(&self) -> f64 {
        self.constants.iota
    }

    pub fn beta(&self) -> f64 {
        self.constants.beta
    }

    pub fn domain(&self) -> &DomainBox {
        &self.domain
    }

    pub fn sampling_region(&self) -> &DomainBox {
        &self.sampling_region
    }

    /// Membership in `Ω_β = {x ∈ D : V(x) ≤ β}`.
    pub fn in_sublevel(&self, x: &Vector) -> bool {
        self.domain.contains(x) && self.value(x) <= self.constants.beta
    }

    /// `V̇ = ∇V(x)·F(x, k(x))`.
    pub fn time_derivative(&self, sys: &RomSystem, x: &Vector) -> f64 {
        self.gradient(x).dot(&sys.fom.eval(x, &self.input(x)))
    }

    /// Low-discrepancy samples of the sampling region, projected onto the
    /// state manifold when the plant declares one.
    pub fn region_samples(&self, sys: &RomSystem, n: usize, seed: u64) -> Result<Vec<Vector>> {
        let mut pts = self.sampling_region.sample(n, seed)?;
        if sys.fom.has_normalizer() {
            pts.iter_mut().for_each(|x| sys.fom.normalize(x));
        }
        Ok(pts)
    }
}

impl fmt::Debug for SimulationCertificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SimulationCertificate")
            .field("constants", &self.constants)
            .field("analytic_gradient", &self.gradient.is_some())
            .field("domain", &self.domain)
            .finish_non_exhaustive()
    }
}

/// Outcome of a sampling check. The sign convention of `worst_margin` is
/// check-specific: a minimum margin for lower-bound style checks, a maximum
/// violation for the decrease check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub check: String,
    pub n_samples: usize,
    pub worst_margin: f64,
    pub worst_point: Vec<f64>,
    pub pass: bool,
}

fn require_samples(samples: &[Vector]) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("empty sample set".into()));
    }
    Ok(())
}

/// Deterministic arg-extremum over values computed in parallel.
fn worst_by<F>(samples: &[Vector], eval: F, minimize: bool) -> (f64, usize)
where
    F: Fn(&Vector) -> f64 + Sync + Send,
{
    let values: Vec<f64> = samples.par_iter().map(eval).collect();
    let mut best = (values[0], 0);
    for (i, &v) in values.iter().enumerate().skip(1) {
        let better = if minimize { v < best.0 } else { v > best.0 };
        if better || v.is_nan() && !best.0.is_nan() {
            best = (v, i);
        }
    }
    best
}

/// Worst margin of `V(x) − ρ‖ψ(x) − κ(π(x))‖²`; passes iff ≥ −1e-9.
pub fn check_lower_bound(
    cert: &SimulationCertificate,
    sys: &RomSystem,
    kappa: &dyn ReducedController,
    samples: &[Vector],
) -> Result<CheckReport> {
    require_samples(samples)?;
    let (worst, i) = worst_by(
        samples,
        |x| cert.value(x) - cert.rho() * sys.surface_residual(kappa, x).norm_squared(),
        true,
    );
    Ok(CheckReport {
        check: "lower_bound".into(),
        n_samples: samples.len(),
        worst_margin: worst,
        worst_point: samples[i].iter().copied().collect(),
        pass: worst >= -LOWER_BOUND_TOL,
    })
}

/// Worst violation of `∇V·F(x, k(x)) + λV(x) − ι`; passes iff ≤ 1e-7.
pub fn check_decrease(cert: &SimulationCertificate, sys: &RomSystem, samples: &[Vector]) -> Result<CheckReport> {
    require_samples(samples)?;
    let (worst, i) = worst_by(
        samples,
        |x| cert.time_derivative(sys, x) + cert.lambda() * cert.value(x) - cert.iota(),
        false,
    );
    Ok(CheckReport {
        check: "decrease".into(),
        n_samples: samples.len(),
        worst_margin: worst,
        worst_point: samples[i].iter().copied().collect(),
        pass: worst <= DECREASE_TOL,
    })
}

/// Regular-value check of `β`: on samples with `|V − β| ≤ 1e-3`, the gradient
/// must not vanish, and `β > ι/λ` must still hold.
///
/// Returns [`Error::Inconclusive`] when no sample lies in the shell.
pub fn check_regular_value(cert: &SimulationCertificate, boundary_samples: &[Vector]) -> Result<CheckReport> {
    let beta = cert.beta();
    let shell: Vec<Vector> = boundary_samples
        .iter()
        .filter(|x| (cert.value(x) - beta).abs() <= LEVEL_SET_TOL)
        .cloned()
        .collect();
    if shell.is_empty() {
        return Err(Error::Inconclusive("no samples within the level-set shell of β".into()));
    }
    let (worst, i) = worst_by(&shell, |x| cert.gradient(x).norm(), true);
    let hypothesis = beta > cert.iota() / cert.lambda();
    Ok(CheckReport {
        check: "regular_value".into(),
        n_samples: shell.len(),
        worst_margin: worst,
        worst_point: shell[i].iter().copied().collect(),
        pass: hypothesis && worst >= REGULAR_GRADIENT_MIN,
    })
}

/// Points on `{V = β}` found by bisection along seeded random rays from
/// interior points of `Ω_β` inside the sampling region.
pub fn sublevel_boundary_samples(
    cert: &SimulationCertificate,
    sys: &RomSystem,
    n_rays: usize,
    seed: u64,
) -> Result<Vec<Vector>> {
    let region = cert.sampling_region();
    let interior: Vec<Vector> = cert
        .region_samples(sys, 4 * n_rays.max(1), seed)?
        .into_iter()
        .filter(|x| cert.value(x) < cert.beta())
        .collect();
    if interior.is_empty() {
        return Err(Error::Inconclusive("no interior points of Ω_β in the sampling region".into()));
    }
    let widths = region.half_widths();
    let mut rng = sampling::rng(seed ^ 0x5eed_b0a7);
    let mut out = Vec::new();
    for r in 0..n_rays {
        let x0 = &interior[r % interior.len()];
        let dir = Vector::from_iterator(x0.len(), widths.iter().map(|w| w * rng.gen_range(-1.0..1.0)));
        let point = |s: f64| {
            let mut x = x0 + &dir * s;
            sys.fom.normalize(&mut x);
            x
        };
        let inside = |s: f64| {
            let x = point(s);
            region.contains(&x) && cert.value(&x) <= cert.beta()
        };
        if let Some(s) = bisect_exit(inside, 1.0) {
            out.push(point(s));
        }
    }
    Ok(out)
}

/// Largest `s ∈ (0, s_max]` on the inside of the first exit of `inside`
/// along the ray, refined by bisection; `None` if the ray never exits.
pub(crate) fn bisect_exit<F>(inside: F, s_max: f64) -> Option<f64>
where
    F: Fn(f64) -> bool,
{
    let march = 64;
    let mut lo = 0.0;
    let mut hi = None;
    for k in 1..=march {
        let s = s_max * k as f64 / march as f64;
        if inside(s) {
            lo = s;
        } else {
            hi = Some(s);
            break;
        }
    }
    let mut hi = hi?;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if inside(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(lo)
}

/// Right-hand side of the tracking-error bound
/// `‖ψ(x(t)) − κ(π(x(t)))‖² ≤ V(x₀)/ρ·e^{−λt} + ι/(λρ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackingEnvelope {
    pub v0: f64,
    pub rho: f64,
    pub lambda: f64,
    pub iota: f64,
}

impl TrackingEnvelope {
    pub fn new(v0: f64, rho: f64, lambda: f64, iota: f64) -> Result<Self> {
        if !(v0 >= 0.0 && rho > 0.0 && lambda > 0.0 && iota >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "envelope needs v0 ≥ 0, ρ > 0, λ > 0, ι ≥ 0 (got {v0}, {rho}, {lambda}, {iota})"
            )));
        }
        Ok(Self { v0, rho, lambda, iota })
    }

    pub fn from_certificate(cert: &SimulationCertificate, x0: &Vector) -> Result<Self> {
        let c = cert.constants();
        Self::new(cert.value(x0), c.rho, c.lambda, c.iota)
    }

    pub fn asymptote(&self) -> f64 {
        self.iota / (self.lambda * self.rho)
    }

    pub fn bound(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::InvalidArgument(format!("time must be nonnegative, got {t}")));
        }
        Ok(self.v0 / self.rho * (-self.lambda * t).exp() + self.asymptote())
    }
}

/// Convenience wrapper for [`TrackingEnvelope::bound`].
pub fn tracking_bound(env: &TrackingEnvelope, t: f64) -> Result<f64> {
    env.bound(t)
}

/// Constants fitted from sampled trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FittedConstants {
    pub rho: f64,
    pub lambda: f64,
    pub iota: f64,
    pub n_samples: usize,
}

/// Multiplicative shift applied to the fitted `ι`.
pub const IOTA_SHIFT: f64 = 1.1;

/// Number of log-spaced decay rates scanned by [`estimate_constants`].
const LAMBDA_GRID: usize = 2000;

/// Fits `(ρ, λ, ι)` for a candidate `V` from states sampled along rollouts.
///
/// Only samples with `V ≤ level` enter the fit when a level is given, so the
/// constants describe `Ω_level`. `ρ` is the smallest ratio `V/‖residual‖²`
/// over samples with residual norm at least 1e-6 (floored at 1e-9). For each
/// decay rate `λ`, `ι(λ)` is the smallest offset with `V̇ ≤ −λV + ι(λ)` on every
/// sample; the fit picks the `λ` minimizing the asymptotic tracking bound
/// `ι(λ)/λ` (largest `λ` on ties) and scales `ι` by [`IOTA_SHIFT`].
pub fn estimate_constants(
    sys: &RomSystem,
    kappa: &dyn ReducedController,
    value: &(dyn Fn(&Vector) -> f64 + Sync),
    gradient: Option<&(dyn Fn(&Vector) -> Vector + Sync)>,
    interface: &dyn Interface,
    rollouts: &[Vec<Vector>],
    level: Option<f64>,
) -> Result<FittedConstants> {
    let samples: Vec<&Vector> = rollouts.iter().flatten().collect();
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no rollout samples".into()));
    }
    // (V, V̇, ‖residual‖²) per sample
    let rows: Vec<(f64, f64, f64)> = samples
        .par_iter()
        .filter(|x| level.map_or(true, |l| value(x) <= l))
        .map(|x| {
            let v = value(x);
            let grad = match gradient {
                Some(g) => g(x),
                None => numdiff::gradient(value, x),
            };
            let vdot = grad.dot(&sys.fom.eval(x, &interface.input(x)));
            (v, vdot, sys.surface_residual(kappa, x).norm_squared())
        })
        .collect();
    if rows.is_empty() {
        return Err(Error::EstimationFailed("no rollout samples inside the fitting level set".into()));
    }
    if rows.iter().any(|(v, vd, r)| !(v.is_finite() && vd.is_finite() && r.is_finite())) {
        return Err(Error::EstimationFailed("non-finite V, V̇ or residual along rollouts".into()));
    }

    let rho = rows
        .iter()
        .filter(|(_, _, r2)| r2.sqrt() >= 1e-6)
        .map(|(v, _, r2)| v / r2)
        .fold(f64::INFINITY, f64::min);
    if !rho.is_finite() {
        return Err(Error::EstimationFailed("no samples off the reduced-order surface; ρ undetermined".into()));
    }
    let rho = rho.max(1e-9);

    // largest rate with ι = 0, when every sample strictly decreases
    let positive: Vec<&(f64, f64, f64)> = rows.iter().filter(|r| r.0 > 0.0).collect();
    if positive.is_empty() {
        return Err(Error::EstimationFailed("V vanishes on every sample; λ undetermined".into()));
    }
    let rate_max = positive.iter().map(|(v, vd, _)| -vd / v).fold(f64::NEG_INFINITY, f64::max);
    let rate_min = positive.iter().map(|(v, vd, _)| -vd / v).fold(f64::INFINITY, f64::min);
    let offset = |lambda: f64| rows.iter().map(|(v, vd, _)| vd + lambda * v).fold(0.0, f64::max);
    let (lambda, iota) = if rate_min > 0.0 && rows.iter().all(|r| r.0 > 0.0 || r.1 <= 0.0) {
        (rate_min, offset(rate_min))
    } else {
        let hi = rate_max.max(1e-3) * 2.0;
        let lo = 1e-3f64.min(hi / 10.0);
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for i in 0..LAMBDA_GRID {
            let lambda = lo * (hi / lo).powf(i as f64 / (LAMBDA_GRID - 1) as f64);
            let iota = offset(lambda);
            let ratio = iota / lambda;
            if ratio <= best.0 * (1.0 + 1e-12) {
                best = (ratio, lambda, iota);
            }
        }
        (best.1, best.2)
    };
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::EstimationFailed(format!("fitted decay rate λ = {lambda} is not positive")));
    }
    Ok(FittedConstants { rho, lambda, iota: iota * IOTA_SHIFT, n_samples: rows.len() })
}

/// Conservative `β`: 0.99 × the smallest sampled `V` on the finite faces of
/// `domain`, so the sampled sublevel set stays inside `D`.
///
/// Face points span the sampling region in every other coordinate.
pub fn estimate_beta(
    value: &(dyn Fn(&Vector) -> f64 + Sync),
    domain: &DomainBox,
    sampling_region: &DomainBox,
    per_face: usize,
    seed: u64,
    normalize: Option<&(dyn Fn(&mut Vector) + Sync)>,
) -> Result<f64> {
    let dim = domain.dim();
    let mut faces = Vec::new();
    for i in 0..dim {
        for bound in [domain.lower()[i], domain.upper()[i]] {
            if bound.is_finite() {
                faces.push((i, bound));
            }
        }
    }
    if faces.is_empty() {
        return Err(Error::InvalidArgument("domain has no finite faces; β must be supplied".into()));
    }
    let mut points = Vec::with_capacity(faces.len() * per_face);
    for (f, &(i, bound)) in faces.iter().enumerate() {
        let mut seq = Halton::new(dim, seed.wrapping_add(f as u64))?;
        for _ in 0..per_face {
            let mut x = sampling_region.from_unit(&seq.next_point());
            x[i] = bound;
            if let Some(n) = normalize {
                n(&mut x);
            }
            points.push(x);
        }
    }
    let min_face = points.par_iter().map(|x| value(x)).collect::<Vec<_>>().into_iter().fold(f64::INFINITY, f64::min);
    if !(min_face > 0.0) {
        return Err(Error::EstimationFailed(format!("V reaches {min_face} on the domain boundary")));
    }
    Ok(0.99 * min_face)
}
