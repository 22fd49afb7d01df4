//! Safety-critical control of full-order systems through reduced-order models.
//!
//! A full-order model (FOM) `ẋ = F(x, u)` is related to a low-dimensional,
//! control-affine reduced-order model (ROM) `ẏ = f(y) + g(y)v` by a state
//! projection `y = π(x)` and a control projection `v = ψ(x)`. A safety filter
//! designed on the ROM with a control barrier function `h` is refined into
//! full-order inputs by an interface `k(x)` whose tracking quality is certified
//! by a simulation function `V`. The composite barrier `B = h∘π − V/μ` then
//! certifies safety of the full-order closed loop.
//!
//! Module map:
//!
//! * [`rom`]: models, projections, discrepancy and the reduced-order surface.
//! * [`simfun`]: simulation-function certificates and their falsification checks.
//! * [`cbf`]: reduced-order barriers, the input-to-state safe filter and smooth combination.
//! * [`composite`]: composite barriers, the gain condition and invariance certification.
//! * [`plants`]: the quadrotor and double-integrator plants.
//! * [`sim`]: fixed-step RK4 rollouts with per-step certificate logging.
//! * [`experiment`]: declarative experiment configs, sweeps and scripted replays.

pub mod cbf;
pub mod composite;
pub mod error;
pub mod experiment;
pub mod numdiff;
pub mod plants;
pub mod rom;
pub mod sampling;
pub mod sim;
pub mod simfun;

pub use error::{Error, Result};

/// Dense state/input vector.
pub type Vector = nalgebra::DVector<f64>;
/// Dense matrix (Jacobians, actuation matrices).
pub type Matrix = nalgebra::DMatrix<f64>;
