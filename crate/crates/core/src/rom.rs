//! Full-order and reduced-order models tied together by projection maps.
//!
//! Dimension mismatches between the pieces of a [`RomSystem`] are programming
//! errors and panic with a descriptive message.

use std::fmt;
use std::sync::Arc;

use crate::{numdiff, Matrix, Vector};

pub type VectorMap = Arc<dyn Fn(&Vector) -> Vector + Send + Sync>;
pub type MatrixMap = Arc<dyn Fn(&Vector) -> Matrix + Send + Sync>;
pub type ScalarMap = Arc<dyn Fn(&Vector) -> f64 + Send + Sync>;
pub type Dynamics = Arc<dyn Fn(&Vector, &Vector) -> Vector + Send + Sync>;
pub type Normalizer = Arc<dyn Fn(&mut Vector) + Send + Sync>;

/// `ẋ = F(x, u)` with `x ∈ R^N`, `u ∈ R^M`.
#[derive(Clone)]
pub struct FullOrderModel {
    state_dim: usize,
    input_dim: usize,
    dynamics: Dynamics,
    normalizer: Option<Normalizer>,
}

impl FullOrderModel {
    pub fn new<F>(state_dim: usize, input_dim: usize, dynamics: F) -> Self
    where
        F: Fn(&Vector, &Vector) -> Vector + Send + Sync + 'static,
    {
        assert!(state_dim > 0 && input_dim > 0, "FOM dimensions must be positive");
        Self { state_dim, input_dim, dynamics: Arc::new(dynamics), normalizer: None }
    }

    /// Registers a projection back onto the state manifold (e.g. quaternion
    /// renormalization) applied after every integration step.
    pub fn with_normalizer<F>(mut self, normalizer: F) -> Self
    where
        F: Fn(&mut Vector) + Send + Sync + 'static,
    {
        self.normalizer = Some(Arc::new(normalizer));
        self
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn eval(&self, x: &Vector, u: &Vector) -> Vector {
        assert_eq!(x.len(), self.state_dim, "FOM state has wrong dimension");
        assert_eq!(u.len(), self.input_dim, "FOM input has wrong dimension");
        let dx = (self.dynamics)(x, u);
        assert_eq!(dx.len(), self.state_dim, "FOM dynamics returned wrong dimension");
        dx
    }

    pub fn has_normalizer(&self) -> bool {
        self.normalizer.is_some()
    }

    pub fn normalize(&self, x: &mut Vector) {
        if let Some(n) = &self.normalizer {
            n(x);
        }
    }
}

impl fmt::Debug for FullOrderModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FullOrderModel")
            .field("state_dim", &self.state_dim)
            .field("input_dim", &self.input_dim)
            .finish_non_exhaustive()
    }
}

/// State map `π: R^N → R^n` and control map `ψ: R^N → R^m`.
#[derive(Clone)]
pub struct ProjectionPair {
    state_dim: usize,
    rom_dim: usize,
    rom_input_dim: usize,
    state_map: VectorMap,
    control_map: VectorMap,
    state_jacobian: Option<MatrixMap>,
}

impl ProjectionPair {
    pub fn new<P, Q>(state_dim: usize, rom_dim: usize, rom_input_dim: usize, state_map: P, control_map: Q) -> Self
    where
        P: Fn(&Vector) -> Vector + Send + Sync + 'static,
        Q: Fn(&Vector) -> Vector + Send + Sync + 'static,
    {
        Self {
            state_dim,
            rom_dim,
            rom_input_dim,
            state_map: Arc::new(state_map),
            control_map: Arc::new(control_map),
            state_jacobian: None,
        }
    }

    /// Supplies `∂π/∂x` analytically; otherwise central differences are used.
    pub fn with_state_jacobian<J>(mut self, jacobian: J) -> Self
    where
        J: Fn(&Vector) -> Matrix + Send + Sync + 'static,
    {
        self.state_jacobian = Some(Arc::new(jacobian));
        self
    }

    /// Linear projections `π(x) = P x`, `ψ(x) = Q x` with exact Jacobian `P`.
    pub fn linear(p: Matrix, q: Matrix) -> Self {
        assert_eq!(p.ncols(), q.ncols(), "projection matrices disagree on N");
        let (n, big_n, m) = (p.nrows(), p.ncols(), q.nrows());
        let pj = p.clone();
        Self::new(big_n, n, m, move |x| &p * x, move |x| &q * x).with_state_jacobian(move |_| pj.clone())
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn rom_dim(&self) -> usize {
        self.rom_dim
    }

    pub fn rom_input_dim(&self) -> usize {
        self.rom_input_dim
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        self.state_jacobian.is_some()
    }

    pub fn state(&self, x: &Vector) -> Vector {
        assert_eq!(x.len(), self.state_dim, "π applied to state of wrong dimension");
        let y = (self.state_map)(x);
        assert_eq!(y.len(), self.rom_dim, "π returned wrong dimension");
        y
    }

    pub fn control(&self, x: &Vector) -> Vector {
        assert_eq!(x.len(), self.state_dim, "ψ applied to state of wrong dimension");
        let v = (self.control_map)(x);
        assert_eq!(v.len(), self.rom_input_dim, "ψ returned wrong dimension");
        v
    }

    /// `∂π/∂x (x)`, an `n × N` matrix.
    pub fn state_jacobian(&self, x: &Vector) -> Matrix {
        match &self.state_jacobian {
            Some(j) => {
                let jac = j(x);
                assert_eq!(jac.shape(), (self.rom_dim, self.state_dim), "∂π/∂x has wrong shape");
                jac
            }
            None => self.fd_state_jacobian(x),
        }
    }

    /// Central-difference `∂π/∂x`, regardless of whether an analytic one exists.
    pub fn fd_state_jacobian(&self, x: &Vector) -> Matrix {
        numdiff::jacobian(|z| self.state(z), x)
    }
}

impl fmt::Debug for ProjectionPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProjectionPair")
            .field("state_dim", &self.state_dim)
            .field("rom_dim", &self.rom_dim)
            .field("rom_input_dim", &self.rom_input_dim)
            .field("analytic_jacobian", &self.state_jacobian.is_some())
            .finish_non_exhaustive()
    }
}

/// Control-affine idealized dynamics `ẏ = f(y) + g(y)v`.
#[derive(Clone)]
pub struct ReducedOrderModel {
    dim: usize,
    input_dim: usize,
    drift: VectorMap,
    actuation: MatrixMap,
}

impl ReducedOrderModel {
    pub fn new<F, G>(dim: usize, input_dim: usize, drift: F, actuation: G) -> Self
    where
        F: Fn(&Vector) -> Vector + Send + Sync + 'static,
        G: Fn(&Vector) -> Matrix + Send + Sync + 'static,
    {
        assert!(dim > 0 && input_dim > 0, "ROM dimensions must be positive");
        Self { dim, input_dim, drift: Arc::new(drift), actuation: Arc::new(actuation) }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn drift(&self, y: &Vector) -> Vector {
        assert_eq!(y.len(), self.dim, "ROM state has wrong dimension");
        let f = (self.drift)(y);
        assert_eq!(f.len(), self.dim, "ROM drift returned wrong dimension");
        f
    }

    pub fn actuation(&self, y: &Vector) -> Matrix {
        assert_eq!(y.len(), self.dim, "ROM state has wrong dimension");
        let g = (self.actuation)(y);
        assert_eq!(g.shape(), (self.dim, self.input_dim), "ROM actuation has wrong shape");
        g
    }

    /// `f(y) + g(y)v`.
    pub fn velocity(&self, y: &Vector, v: &Vector) -> Vector {
        assert_eq!(v.len(), self.input_dim, "ROM input has wrong dimension");
        self.drift(y) + self.actuation(y) * v
    }
}

impl fmt::Debug for ReducedOrderModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ReducedOrderModel")
            .field("dim", &self.dim)
            .field("input_dim", &self.input_dim)
            .finish_non_exhaustive()
    }
}

/// A reduced-order controller `κ: R^n → R^m`.
pub trait ReducedController: Send + Sync {
    fn eval(&self, y: &Vector) -> Vector;

    /// `∂κ/∂y`; central differences unless overridden.
    fn jacobian(&self, y: &Vector) -> Matrix {
        numdiff::jacobian(|z| self.eval(z), y)
    }
}

impl<F> ReducedController for F
where
    F: Fn(&Vector) -> Vector + Send + Sync,
{
    fn eval(&self, y: &Vector) -> Vector {
        self(y)
    }
}

/// FOM, projections and ROM with consistent dimensions.
#[derive(Debug, Clone)]
pub struct RomSystem {
    pub fom: FullOrderModel,
    pub proj: ProjectionPair,
    pub rom: ReducedOrderModel,
}

impl RomSystem {
    pub fn new(fom: FullOrderModel, proj: ProjectionPair, rom: ReducedOrderModel) -> Self {
        assert_eq!(proj.state_dim(), fom.state_dim(), "π domain must be the FOM state space");
        assert_eq!(proj.rom_dim(), rom.dim(), "π codomain must be the ROM state space");
        assert_eq!(proj.rom_input_dim(), rom.input_dim(), "ψ codomain must be the ROM input space");
        Self { fom, proj, rom }
    }

    pub fn project_state(&self, x: &Vector) -> Vector {
        self.proj.state(x)
    }

    pub fn project_input(&self, x: &Vector) -> Vector {
        self.proj.control(x)
    }

    /// `(∂π/∂x)(x) · F(x, u)`.
    pub fn projected_dynamics(&self, x: &Vector, u: &Vector) -> Vector {
        self.proj.state_jacobian(x) * self.fom.eval(x, u)
    }

    /// `d = (∂π/∂x)F(x,u) − f(π(x)) − g(π(x))v`.
    pub fn discrepancy(&self, x: &Vector, u: &Vector, v: &Vector) -> Vector {
        let y = self.project_state(x);
        self.projected_dynamics(x, u) - self.rom.velocity(&y, v)
    }

    /// `ψ(x) − κ(π(x))`; zero exactly on the reduced-order surface.
    pub fn surface_residual(&self, kappa: &dyn ReducedController, x: &Vector) -> Vector {
        let k = kappa.eval(&self.project_state(x));
        assert_eq!(k.len(), self.rom.input_dim(), "κ returned wrong dimension");
        self.project_input(x) - k
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn integrator_rom(n: usize) -> ReducedOrderModel {
        ReducedOrderModel::new(n, n, move |_| Vector::zeros(n), move |_| Matrix::identity(n, n))
    }

    /// FOM ẋ = A x + B u on R^3 with nonlinear π.
    fn nonlinear_system() -> RomSystem {
        let fom = FullOrderModel::new(3, 1, |x, u| {
            Vector::from_vec(vec![x[1], -x[0] + 0.3 * x[2], u[0] - x[2]])
        });
        let proj = ProjectionPair::new(
            3,
            2,
            2,
            |x| Vector::from_vec(vec![x[0].sin() + x[1] * x[1], x[0] * x[2]]),
            |x| Vector::from_vec(vec![x[1], x[2]]),
        )
        .with_state_jacobian(|x| {
            Matrix::from_row_slice(2, 3, &[x[0].cos(), 2.0 * x[1], 0.0, x[2], 0.0, x[0]])
        });
        RomSystem::new(fom, proj, integrator_rom(2))
    }

    #[test]
    fn linear_projection_matches_matrix_multiply() {
        let mut rng = crate::sampling::rng(3);
        let p = Matrix::from_fn(2, 5, |_, _| rng.gen_range(-1.0..1.0));
        let q = Matrix::from_fn(3, 5, |_, _| rng.gen_range(-1.0..1.0));
        let proj = ProjectionPair::linear(p.clone(), q.clone());
        for _ in 0..20 {
            let x = Vector::from_fn(5, |_, _| rng.gen_range(-3.0..3.0));
            let direct_y: Vec<f64> = (0..2).map(|r| (0..5).map(|c| p[(r, c)] * x[c]).sum()).collect();
            let direct_v: Vec<f64> = (0..3).map(|r| (0..5).map(|c| q[(r, c)] * x[c]).sum()).collect();
            assert_relative_eq!(proj.state(&x), Vector::from_vec(direct_y), epsilon = 1e-12);
            assert_relative_eq!(proj.control(&x), Vector::from_vec(direct_v), epsilon = 1e-12);
        }
    }

    #[test]
    fn identity_projection_of_zero() {
        let proj = ProjectionPair::linear(Matrix::identity(3, 3), Matrix::identity(3, 3));
        assert_eq!(proj.state(&Vector::zeros(3)), Vector::zeros(3));
    }

    #[test]
    fn zero_dynamics_project_to_zero() {
        let fom = FullOrderModel::new(3, 1, |_, _| Vector::zeros(3));
        let sys = RomSystem::new(fom, nonlinear_system().proj, integrator_rom(2));
        let x = Vector::from_vec(vec![0.2, -0.4, 1.0]);
        assert_eq!(sys.projected_dynamics(&x, &Vector::zeros(1)), Vector::zeros(2));
    }

    #[test]
    fn projected_dynamics_matches_derivative_along_trajectory() {
        let sys = nonlinear_system();
        let x0 = Vector::from_vec(vec![0.4, -0.7, 1.1]);
        let u = Vector::from_vec(vec![0.25]);
        // RK4 a short step forward and back, difference π along the trajectory.
        let field = |x: &Vector| sys.fom.eval(x, &u);
        let rk4 = |x: &Vector, dt: f64| {
            let k1 = field(x);
            let k2 = field(&(x + &k1 * (dt / 2.0)));
            let k3 = field(&(x + &k2 * (dt / 2.0)));
            let k4 = field(&(x + &k3 * dt));
            x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
        };
        let dt = 1e-4;
        let fd = (sys.project_state(&rk4(&x0, dt)) - sys.project_state(&rk4(&x0, -dt))) / (2.0 * dt);
        assert_relative_eq!(sys.projected_dynamics(&x0, &u), fd, epsilon = 1e-4);
    }

    #[test]
    fn mismatched_drift_shows_up_in_discrepancy() {
        let c = Vector::from_vec(vec![0.5, -1.5]);
        let base = nonlinear_system();
        let cc = c.clone();
        let rom = ReducedOrderModel::new(2, 2, move |_| cc.clone(), |_| Matrix::identity(2, 2));
        let shifted = RomSystem::new(base.fom.clone(), base.proj.clone(), rom);
        let x = Vector::from_vec(vec![0.1, 0.2, -0.3]);
        let u = Vector::from_vec(vec![1.0]);
        let v = Vector::from_vec(vec![0.7, 0.9]);
        let expected = base.discrepancy(&x, &u, &v) - &c;
        assert_relative_eq!(shifted.discrepancy(&x, &u, &v), expected, epsilon = 1e-14);
    }

    #[test]
    fn discrepancy_vanishes_when_rom_is_the_projection() {
        // FOM ẏ = v, v̇ = u with π = y, ψ = v and an integrator ROM.
        let fom = FullOrderModel::new(2, 1, |x, u| Vector::from_vec(vec![x[1], u[0]]));
        let proj = ProjectionPair::linear(Matrix::from_row_slice(1, 2, &[1.0, 0.0]), Matrix::from_row_slice(1, 2, &[0.0, 1.0]));
        let sys = RomSystem::new(fom, proj, integrator_rom(1));
        let x = Vector::from_vec(vec![3.0, -2.0]);
        let d = sys.discrepancy(&x, &Vector::from_vec(vec![5.0]), &sys.project_input(&x));
        assert_eq!(d, Vector::zeros(1));
    }

    #[test]
    fn surface_residual_definition() {
        let fom = FullOrderModel::new(4, 2, |x, u| Vector::from_vec(vec![x[2], x[3], u[0], u[1]]));
        let proj = ProjectionPair::new(4, 2, 2, |x| x.rows(0, 2).into(), |x| x.rows(2, 2).into());
        let sys = RomSystem::new(fom, proj, integrator_rom(2));
        let c = Vector::from_vec(vec![0.3, -0.2]);
        let cc = c.clone();
        let constant = move |_: &Vector| cc.clone();
        let x = Vector::from_vec(vec![1.0, 2.0, 0.3, -0.2]);
        assert_eq!(sys.surface_residual(&constant, &x), Vector::zeros(2));
        let x = Vector::from_vec(vec![1.0, 2.0, 1.0, 1.0]);
        assert_eq!(sys.surface_residual(&constant, &x), Vector::from_vec(vec![1.0, 1.0]) - c);
    }

    #[test]
    #[should_panic(expected = "π codomain")]
    fn dimension_mismatch_is_a_contract_violation() {
        let fom = FullOrderModel::new(4, 2, |x, _| x.clone());
        let proj = ProjectionPair::linear(Matrix::identity(3, 4), Matrix::identity(2, 4));
        let _ = RomSystem::new(fom, proj, integrator_rom(2));
    }

    proptest! {
        #[test]
        fn rom_decomposition_identity(a in -2.0..2.0f64, b in -2.0..2.0f64, c in -2.0..2.0f64, u in -3.0..3.0f64) {
            let sys = nonlinear_system();
            let x = Vector::from_vec(vec![a, b, c]);
            let u = Vector::from_vec(vec![u]);
            let y = sys.project_state(&x);
            let v = sys.project_input(&x);
            let lhs = sys.projected_dynamics(&x, &u) - sys.rom.velocity(&y, &v) - sys.discrepancy(&x, &u, &v);
            prop_assert!(lhs.amax() <= 1e-12);
        }

        #[test]
        fn analytic_jacobian_matches_central_differences(a in -2.0..2.0f64, b in -2.0..2.0f64, c in -2.0..2.0f64) {
            let sys = nonlinear_system();
            let x = Vector::from_vec(vec![a, b, c]);
            let an = sys.proj.state_jacobian(&x);
            let fd = sys.proj.fd_state_jacobian(&x);
            prop_assert!((an - &fd).amax() <= 1e-5 * (1.0 + fd.amax()));
        }
    }
}
