//! Planar double integrator `ÿ = u` with a backstepping interface.
//!
//! With `e = v − κ(y)` the interface `k(x) = (∂κ/∂y)(y)·v − K e` gives
//! `ė = −K e`, so `V = ρ‖e‖²` satisfies `V̇ = −2K·V` exactly: a simulation
//! function with `λ = 2K`, `ι = 0` and zero discrepancy, valid on all of `R⁴`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::plants::single_integrator_rom;
use crate::rom::{FullOrderModel, ProjectionPair, ReducedController, RomSystem};
use crate::sampling::DomainBox;
use crate::simfun::{CertificateConstants, Interface, SimulationCertificate};
use crate::{Matrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DoubleIntegratorParams {
    /// Backstepping gain `K`.
    pub gain: f64,
    pub rho: f64,
    pub beta: f64,
    /// Sampling box for positions, `[x_min, x_max, y_min, y_max]`.
    pub position_bounds: [f64; 4],
    /// Sampling box half-width for each velocity component.
    pub speed_bound: f64,
}

impl Default for DoubleIntegratorParams {
    fn default() -> Self {
        Self { gain: 2.0, rho: 1.0, beta: 1.0, position_bounds: [-2.0, 5.0, -3.0, 3.0], speed_bound: 3.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoubleIntegratorState {
    pub y: [f64; 2],
    pub v: [f64; 2],
}

impl DoubleIntegratorState {
    pub fn to_vector(&self) -> Vector {
        Vector::from_vec(vec![self.y[0], self.y[1], self.v[0], self.v[1]])
    }

    pub fn from_vector(x: &Vector) -> Self {
        assert_eq!(x.len(), 4, "double integrator state is 4-dimensional");
        Self { y: [x[0], x[1]], v: [x[2], x[3]] }
    }
}

pub fn double_integrator_fom() -> FullOrderModel {
    FullOrderModel::new(4, 2, |x, u| Vector::from_vec(vec![x[2], x[3], u[0], u[1]]))
}

/// `π(x) = y`, `ψ(x) = v`.
pub fn double_integrator_projections() -> ProjectionPair {
    let p = Matrix::from_row_slice(2, 4, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
    let q = Matrix::from_row_slice(2, 4, &[0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
    ProjectionPair::linear(p, q)
}

/// `k(x) = (∂κ/∂y)(y)·v − K(v − κ(y))`.
#[derive(Clone)]
pub struct BacksteppingInterface {
    pub kappa: Arc<dyn ReducedController>,
    pub gain: f64,
}

impl Interface for BacksteppingInterface {
    fn input(&self, x: &Vector) -> Vector {
        let y = x.rows(0, 2).into_owned();
        let v = x.rows(2, 2).into_owned();
        let e = &v - self.kappa.eval(&y);
        self.kappa.jacobian(&y) * v - e * self.gain
    }
}

pub fn double_integrator_domain(params: &DoubleIntegratorParams) -> (DomainBox, DomainBox) {
    let [x0, x1, y0, y1] = params.position_bounds;
    let s = params.speed_bound;
    let region = DomainBox::new(vec![x0, y0, -s, -s], vec![x1, y1, s, s]).expect("valid double integrator bounds");
    (DomainBox::unbounded(4), region)
}

/// The plant as a [`RomSystem`] with its exact backstepping certificate.
///
/// Panics if the constants violate the certificate requirements (`K`, `ρ`,
/// `β` must be positive).
pub fn double_integrator_system(
    params: DoubleIntegratorParams,
    kappa: Arc<dyn ReducedController>,
) -> (RomSystem, SimulationCertificate) {
    let sys = RomSystem::new(double_integrator_fom(), double_integrator_projections(), single_integrator_rom());
    let rho = params.rho;
    let interface = BacksteppingInterface { kappa: Arc::clone(&kappa), gain: params.gain };
    let kv = Arc::clone(&kappa);
    let value = move |x: &Vector| {
        let y = x.rows(0, 2).into_owned();
        rho * (x.rows(2, 2) - kv.eval(&y)).norm_squared()
    };
    let gradient = move |x: &Vector| {
        let y = x.rows(0, 2).into_owned();
        let e = x.rows(2, 2) - kappa.eval(&y);
        let gy = -(kappa.jacobian(&y).tr_mul(&e)) * (2.0 * rho);
        let gv = e * (2.0 * rho);
        Vector::from_vec(vec![gy[0], gy[1], gv[0], gv[1]])
    };
    let constants = CertificateConstants { rho, lambda: 2.0 * params.gain, iota: 0.0, beta: params.beta };
    let (domain, region) = double_integrator_domain(&params);
    let cert = SimulationCertificate::new(value, Arc::new(interface), constants, domain, region)
        .expect("double integrator certificate constants must be positive")
        .with_gradient(gradient);
    (sys, cert)
}
