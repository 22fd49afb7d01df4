//! Quadrotor with state `x = (p, q, ṗ) ∈ R³ × S³ × R³` (quaternion
//! scalar-first) and input `u = (ω, τ)`: body angular rates and collective
//! thrust.
//!
//! ```text
//! ṗ = ṗ
//! q̇ = ½ q ⊗ (0, ω)
//! p̈ = −g e_z + (τ/m) R(q) e_z
//! ```
//!
//! The reduced-order model is the planar single integrator with
//! `π(x) = (p_x, p_y)` and `ψ(x) = (ṗ_x, ṗ_y)`, for which the discrepancy is
//! identically zero.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::plants::single_integrator_rom;
use crate::rom::{FullOrderModel, ProjectionPair, ReducedController, RomSystem};
use crate::sampling::DomainBox;
use crate::simfun::Interface;
use crate::{Error, Matrix, Result, Vector};

pub const STATE_DIM: usize = 10;
pub const INPUT_DIM: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadrotorParams {
    pub mass: f64,
    pub gravity: f64,
    pub hover_altitude: f64,
    /// Velocity tracking gain.
    pub k_v: f64,
    /// Altitude gain producing the vertical velocity command.
    pub k_z: f64,
    /// Attitude gain.
    pub k_r: f64,
}

impl Default for QuadrotorParams {
    fn default() -> Self {
        Self { mass: 1.0, gravity: 9.81, hover_altitude: 1.0, k_v: 5.0, k_z: 2.0, k_r: 8.0 }
    }
}

impl QuadrotorParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("mass", self.mass),
            ("gravity", self.gravity),
            ("hover_altitude", self.hover_altitude),
            ("k_v", self.k_v),
            ("k_z", self.k_z),
            ("k_r", self.k_r),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("quadrotor {name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadrotorState {
    pub p: Vector3<f64>,
    /// `(w, x, y, z)`.
    pub q: [f64; 4],
    pub pdot: Vector3<f64>,
}

impl QuadrotorState {
    /// Level attitude at position `p` with velocity `pdot`.
    pub fn level(p: [f64; 3], pdot: [f64; 3]) -> Self {
        Self { p: p.into(), q: [1.0, 0.0, 0.0, 0.0], pdot: pdot.into() }
    }

    pub fn to_vector(&self) -> Vector {
        let mut x = Vector::zeros(STATE_DIM);
        x.rows_mut(0, 3).copy_from(&self.p);
        x.rows_mut(3, 4).copy_from_slice(&self.q);
        x.rows_mut(7, 3).copy_from(&self.pdot);
        x
    }

    pub fn from_vector(x: &Vector) -> Self {
        assert_eq!(x.len(), STATE_DIM, "quadrotor state is 10-dimensional");
        Self {
            p: Vector3::new(x[0], x[1], x[2]),
            q: [x[3], x[4], x[5], x[6]],
            pdot: Vector3::new(x[7], x[8], x[9]),
        }
    }
}

fn attitude(x: &Vector) -> UnitQuaternion<f64> {
    UnitQuaternion::from_quaternion(Quaternion::new(x[3], x[4], x[5], x[6]))
}

/// Body-to-world rotation `R(q)` of the (normalized) quaternion in `x`.
pub fn rotation(x: &Vector) -> Matrix3<f64> {
    attitude(x).to_rotation_matrix().into_inner()
}

/// Body z-axis in world coordinates, `R(q) e_z`.
pub fn body_z(x: &Vector) -> Vector3<f64> {
    attitude(x) * Vector3::z()
}

/// `ẋ = F(x, u)`; negative thrust is rejected.
pub fn quadrotor_dynamics(params: &QuadrotorParams, x: &Vector, u: &Vector) -> Result<Vector> {
    assert_eq!(x.len(), STATE_DIM, "quadrotor state is 10-dimensional");
    assert_eq!(u.len(), INPUT_DIM, "quadrotor input is (ω, τ)");
    let tau = u[3];
    if !(tau >= 0.0) {
        return Err(Error::InvalidInput(format!("thrust must be nonnegative, got {tau}")));
    }
    let q = Quaternion::new(x[3], x[4], x[5], x[6]);
    let qdot = q * Quaternion::new(0.0, u[0], u[1], u[2]) * 0.5;
    let acc = body_z(x) * (tau / params.mass) - Vector3::z() * params.gravity;
    let mut dx = Vector::zeros(STATE_DIM);
    dx.rows_mut(0, 3).copy_from(&x.rows(7, 3));
    dx[3] = qdot.w;
    dx[4] = qdot.i;
    dx[5] = qdot.j;
    dx[6] = qdot.k;
    dx.rows_mut(7, 3).copy_from(&acc);
    Ok(dx)
}

/// Renormalizes the quaternion block in place.
pub fn normalize_quaternion(x: &mut Vector) {
    let n = x.rows(3, 4).norm();
    if n > 0.0 {
        x.rows_mut(3, 4).unscale_mut(n);
    }
}

/// Full-order model; invalid inputs produce a NaN derivative so rollouts
/// stop with a divergence error.
pub fn quadrotor_fom(params: QuadrotorParams) -> FullOrderModel {
    FullOrderModel::new(STATE_DIM, INPUT_DIM, move |x, u| {
        quadrotor_dynamics(&params, x, u).unwrap_or_else(|_| Vector::from_element(STATE_DIM, f64::NAN))
    })
    .with_normalizer(normalize_quaternion)
}

pub fn quadrotor_projections() -> ProjectionPair {
    let mut p = Matrix::zeros(2, STATE_DIM);
    p[(0, 0)] = 1.0;
    p[(1, 1)] = 1.0;
    let mut q = Matrix::zeros(2, STATE_DIM);
    q[(0, 7)] = 1.0;
    q[(1, 8)] = 1.0;
    ProjectionPair::linear(p, q)
}

pub fn quadrotor_system(params: QuadrotorParams) -> RomSystem {
    RomSystem::new(quadrotor_fom(params), quadrotor_projections(), single_integrator_rom())
}

/// Velocity command `(κ(π(x)), k_z(z_hover − z))`.
fn velocity_command(params: &QuadrotorParams, kappa: &dyn ReducedController, x: &Vector) -> Vector3<f64> {
    let k = kappa.eval(&Vector::from_vec(vec![x[0], x[1]]));
    Vector3::new(k[0], k[1], params.k_z * (params.hover_altitude - x[2]))
}

/// Desired acceleration including gravity compensation.
fn desired_acceleration(params: &QuadrotorParams, kappa: &dyn ReducedController, x: &Vector) -> Vector3<f64> {
    let v_d = velocity_command(params, kappa, x);
    (v_d - Vector3::new(x[7], x[8], x[9])) * params.k_v + Vector3::z() * params.gravity
}

/// Geometric velocity-tracking interface.
///
/// Thrust is the desired acceleration projected on the body z-axis (clamped
/// at zero); body rates steer the z-axis toward the desired acceleration
/// direction, with zero yaw rate. Each clamp is counted since it voids the
/// tracking certificate locally.
pub struct QuadrotorInterface {
    pub params: QuadrotorParams,
    pub kappa: Arc<dyn ReducedController>,
    clamp_events: AtomicU64,
}

impl QuadrotorInterface {
    pub fn new(params: QuadrotorParams, kappa: Arc<dyn ReducedController>) -> Self {
        Self { params, kappa, clamp_events: AtomicU64::new(0) }
    }

    pub fn clamp_events(&self) -> u64 {
        self.clamp_events.load(Ordering::Relaxed)
    }

    /// `(ω, τ)` at `x`.
    pub fn command(&self, x: &Vector) -> (Vector3<f64>, f64) {
        let p = &self.params;
        let a_d = desired_acceleration(p, self.kappa.as_ref(), x);
        let a_norm = a_d.norm();
        if !(a_norm > 1e-9) {
            return (Vector3::zeros(), p.mass * p.gravity);
        }
        let b3 = body_z(x);
        let mut tau = p.mass * a_d.dot(&b3);
        if tau < 0.0 {
            self.clamp_events.fetch_add(1, Ordering::Relaxed);
            tau = 0.0;
        }
        let b_d = a_d / a_norm;
        let mut omega = rotation(x).tr_mul(&b3.cross(&b_d)) * p.k_r;
        omega.z = 0.0;
        (omega, tau)
    }
}

impl Interface for QuadrotorInterface {
    fn input(&self, x: &Vector) -> Vector {
        let (w, tau) = self.command(x);
        Vector::from_vec(vec![w.x, w.y, w.z, tau])
    }
}

/// Candidate simulation function for the velocity-tracking interface:
///
/// `V = ‖ṗ − v_d(x)‖² + w_att‖R(q)e_z − b_d(x)‖² + w_alt(z − z_hover)²`
///
/// where `v_d` is the velocity command and `b_d` the desired thrust
/// direction. Its constants are fitted from rollouts.
#[derive(Clone)]
pub struct TrackingLyapunov {
    pub params: QuadrotorParams,
    pub kappa: Arc<dyn ReducedController>,
    pub attitude_weight: f64,
    pub altitude_weight: f64,
}

impl TrackingLyapunov {
    pub fn new(params: QuadrotorParams, kappa: Arc<dyn ReducedController>) -> Self {
        Self { params, kappa, attitude_weight: 1.0, altitude_weight: 1.0 }
    }

    pub fn value(&self, x: &Vector) -> f64 {
        let p = &self.params;
        let v_d = velocity_command(p, self.kappa.as_ref(), x);
        let a_d = desired_acceleration(p, self.kappa.as_ref(), x);
        let b_d = if a_d.norm() > 1e-9 { a_d.normalize() } else { Vector3::z() };
        (Vector3::new(x[7], x[8], x[9]) - v_d).norm_squared()
            + self.attitude_weight * (body_z(x) - b_d).norm_squared()
            + self.altitude_weight * (x[2] - p.hover_altitude).powi(2)
    }
}

/// `(D, sampling region)`: the domain bounds altitude within 1 m of hover and
/// every velocity component by 4 m/s; positions and attitude are free. The
/// sampling region covers the arena `[−1, 4] × [−1.5, 1.5]` with small tilts.
pub fn quadrotor_domain(params: &QuadrotorParams) -> (DomainBox, DomainBox) {
    let z = params.hover_altitude;
    let inf = f64::INFINITY;
    let domain = DomainBox::new(
        vec![-inf, -inf, z - 1.0, -inf, -inf, -inf, -inf, -4.0, -4.0, -4.0],
        vec![inf, inf, z + 1.0, inf, inf, inf, inf, 4.0, 4.0, 4.0],
    )
    .expect("valid quadrotor domain");
    let region = DomainBox::new(
        vec![-1.0, -1.5, z - 0.5, 0.95, -0.15, -0.15, -0.15, -2.0, -2.0, -1.0],
        vec![4.0, 1.5, z + 0.5, 1.0, 0.15, 0.15, 0.15, 2.0, 2.0, 1.0],
    )
    .expect("valid quadrotor sampling region");
    (domain, region)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numdiff;
    use approx::assert_relative_eq;

    fn params() -> QuadrotorParams {
        QuadrotorParams::default()
    }

    fn input(w: [f64; 3], tau: f64) -> Vector {
        Vector::from_vec(vec![w[0], w[1], w[2], tau])
    }

    /// R(q) written out for a scalar-first unit quaternion.
    fn rotation_oracle(q: [f64; 4]) -> Matrix3<f64> {
        let [w, x, y, z] = q;
        Matrix3::new(
            1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y),
            2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
            2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y),
        )
    }

    #[test]
    fn hover_is_force_balanced() {
        let x = QuadrotorState::level([0.0, 0.0, 1.0], [0.0; 3]).to_vector();
        let dx = quadrotor_dynamics(&params(), &x, &input([0.0; 3], 9.81)).unwrap();
        assert_eq!(dx, Vector::zeros(STATE_DIM));
    }

    #[test]
    fn zero_thrust_is_free_fall() {
        let x = QuadrotorState::level([0.0, 0.0, 1.0], [0.0; 3]).to_vector();
        let dx = quadrotor_dynamics(&params(), &x, &input([0.0; 3], 0.0)).unwrap();
        assert_eq!(dx.rows(7, 3).into_owned(), Vector::from_vec(vec![0.0, 0.0, -9.81]));
    }

    #[test]
    fn tilted_thrust_matches_rotation_oracle() {
        let half = 15f64.to_radians();
        let q = [half.cos(), half.sin(), 0.0, 0.0];
        let x = QuadrotorState { p: Vector3::zeros(), q, pdot: Vector3::zeros() }.to_vector();
        let dx = quadrotor_dynamics(&params(), &x, &input([0.0; 3], 9.81)).unwrap();
        let expected = rotation_oracle(q) * Vector3::z() * 9.81 - Vector3::z() * 9.81;
        assert_relative_eq!(dx.rows(7, 3).into_owned(), Vector::from_column_slice(expected.as_slice()), epsilon = 1e-12);
        assert_relative_eq!(dx[8], -9.81 * 30f64.to_radians().sin(), epsilon = 1e-12);
    }

    #[test]
    fn quaternion_kinematics_match_oracle() {
        let q = [0.9, 0.1, -0.3, 0.2];
        let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        let q = q.map(|v| v / n);
        let w = [0.4, -1.1, 0.7];
        let x = QuadrotorState { p: Vector3::zeros(), q, pdot: Vector3::zeros() }.to_vector();
        let dx = quadrotor_dynamics(&params(), &x, &input(w, 1.0)).unwrap();
        // ½ q ⊗ (0, ω) by hand
        let [a, b, c, d] = q;
        let expected = [
            -b * w[0] - c * w[1] - d * w[2],
            a * w[0] + c * w[2] - d * w[1],
            a * w[1] + d * w[0] - b * w[2],
            a * w[2] + b * w[1] - c * w[0],
        ]
        .map(|v| 0.5 * v);
        for i in 0..4 {
            assert_relative_eq!(dx[3 + i], expected[i], epsilon = 1e-14);
        }
        assert_relative_eq!(rotation(&x), rotation_oracle(q), epsilon = 1e-12);
    }

    #[test]
    fn negative_thrust_rejected() {
        let x = QuadrotorState::level([0.0; 3], [0.0; 3]).to_vector();
        assert!(matches!(quadrotor_dynamics(&params(), &x, &input([0.0; 3], -1.0)), Err(Error::InvalidInput(_))));
        assert!(quadrotor_fom(params()).eval(&x, &input([0.0; 3], -1.0)).iter().all(|v| v.is_nan()));
    }

    #[test]
    fn example_projections() {
        let x = QuadrotorState::level([1.0, 2.0, 3.0], [0.3, -0.1, 0.9]).to_vector();
        let sys = quadrotor_system(params());
        assert_eq!(sys.project_state(&x), Vector::from_vec(vec![1.0, 2.0]));
        assert_eq!(sys.project_input(&x), Vector::from_vec(vec![0.3, -0.1]));
        let still = QuadrotorState::level([1.0, 2.0, 3.0], [0.0; 3]).to_vector();
        assert_eq!(sys.project_input(&still), Vector::zeros(2));
        let fd = sys.proj.fd_state_jacobian(&x);
        assert!((sys.proj.state_jacobian(&x) - fd).amax() <= 1e-8);
    }

    #[test]
    fn interface_equilibrium_on_surface() {
        let kappa: Arc<dyn ReducedController> = Arc::new(|_: &Vector| Vector::from_vec(vec![0.7, -0.2]));
        let k = QuadrotorInterface::new(params(), kappa);
        let x = QuadrotorState::level([0.0, 0.0, 1.0], [0.7, -0.2, 0.0]).to_vector();
        let (w, tau) = k.command(&x);
        assert_eq!(w, Vector3::zeros());
        assert_relative_eq!(tau, 9.81, epsilon = 1e-12);
    }

    #[test]
    fn interface_pitches_toward_commanded_velocity() {
        let kappa: Arc<dyn ReducedController> = Arc::new(|_: &Vector| Vector::from_vec(vec![1.0, 0.0]));
        let k = QuadrotorInterface::new(params(), kappa);
        let sys = quadrotor_system(params());
        let mut x = QuadrotorState::level([0.0, 0.0, 1.0], [0.0; 3]).to_vector();
        let (w, _) = k.command(&x);
        assert!(w.y > 0.0 && w.x.abs() < 1e-12);
        // short explicit rollout: the vehicle accelerates along +x
        for _ in 0..300 {
            let dx = sys.fom.eval(&x, &k.input(&x));
            x += dx * 1e-3;
            normalize_quaternion(&mut x);
        }
        assert!(x[7] > 0.05 && x[0] > 0.0);
        assert!(body_z(&x).x > 0.0);
        assert_eq!(k.clamp_events(), 0);
    }

    #[test]
    fn lyapunov_vanishes_on_surface_at_hover() {
        let kappa: Arc<dyn ReducedController> = Arc::new(|_: &Vector| Vector::from_vec(vec![0.4, 0.1]));
        let v = TrackingLyapunov::new(params(), kappa);
        let x = QuadrotorState::level([2.0, -1.0, 1.0], [0.4, 0.1, 0.0]).to_vector();
        assert_relative_eq!(v.value(&x), 0.0, epsilon = 1e-24);
        let off = QuadrotorState::level([2.0, -1.0, 1.0], [0.9, 0.1, 0.0]).to_vector();
        assert!(v.value(&off) >= 0.25);
        let g = numdiff::gradient(|z| v.value(z), &off);
        assert!(g.iter().all(|c| c.is_finite()));
    }
}
