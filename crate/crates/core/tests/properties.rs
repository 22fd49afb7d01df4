use std::sync::Arc;

use proptest::prelude::*;
use romcbf::cbf::{circular_obstacle_cbf, issf_constraint, safety_filter, FilterGains, Sigma};
use romcbf::composite::CompositeBarrier;
use romcbf::plants::double_integrator::{double_integrator_system, DoubleIntegratorParams};
use romcbf::plants::quadrotor::{quadrotor_dynamics, quadrotor_fom, QuadrotorParams, QuadrotorState};
use romcbf::plants::single_integrator_rom;
use romcbf::rom::ReducedController;
use romcbf::sim::rk4_step;
use romcbf::simfun::TrackingEnvelope;
use romcbf::Vector;

fn v2(a: f64, b: f64) -> Vector {
    Vector::from_vec(vec![a, b])
}

fn goal_seeker() -> Arc<dyn ReducedController> {
    Arc::new(|y: &Vector| (v2(3.0, 0.0) - y) * 0.5)
}

proptest! {
    #[test]
    fn filter_is_the_nearest_feasible_command(
        yx in -3.0..3.0f64, yy in -3.0..3.0f64, kx in -2.0..2.0f64, ky in -2.0..2.0f64,
        wx in -4.0..4.0f64, wy in -4.0..4.0f64,
    ) {
        let cbf = circular_obstacle_cbf(&[0.5, 0.0], 0.6).unwrap();
        let rom = single_integrator_rom();
        let gains = FilterGains::new(1.0, 5.0, Sigma::Omitted, 1.0).unwrap();
        let y = v2(yx, yy);
        prop_assume!((&y - v2(0.5, 0.0)).norm() > 1e-2);
        let nominal = v2(kx, ky);
        let n2 = nominal.clone();
        let v = safety_filter(&cbf, &rom, &gains, &move |_: &Vector| n2.clone(), &y).unwrap();
        let hs = issf_constraint(&cbf, &rom, &gains, &y, 0.0);
        let w = v2(wx, wy);
        if hs.slack(&w) >= 0.0 {
            prop_assert!((&v - &nominal).norm() <= (&w - &nominal).norm() + 1e-9);
        }
    }

    #[test]
    fn envelope_decays_to_its_asymptote(v0 in 0.0..10.0f64, rho in 0.1..5.0f64, lambda in 0.1..5.0f64, iota in 0.0..3.0f64, t in 0.0..20.0f64) {
        let env = TrackingEnvelope::new(v0, rho, lambda, iota).unwrap();
        let b = env.bound(t).unwrap();
        prop_assert!(b >= env.asymptote());
        prop_assert!(env.bound(t + 0.1).unwrap() <= b + 1e-15);
        prop_assert!((env.bound(0.0).unwrap() - (v0 / rho + env.asymptote())).abs() <= 1e-12);
    }

    #[test]
    fn backstepping_certificate_decays_at_twice_the_gain(
        gain in 0.5..6.0f64, px in -2.0..5.0f64, py in -3.0..3.0f64, vx in -3.0..3.0f64, vy in -3.0..3.0f64,
    ) {
        let params = DoubleIntegratorParams { gain, ..Default::default() };
        let (sys, cert) = double_integrator_system(params, goal_seeker());
        let x = Vector::from_vec(vec![px, py, vx, vy]);
        let vdot = cert.time_derivative(&sys, &x);
        prop_assert!((vdot + 2.0 * gain * cert.value(&x)).abs() <= 1e-9 * (1.0 + cert.value(&x)));
    }

    #[test]
    fn composite_barriers_differ_by_the_inflation(px in -2.0..5.0f64, py in -3.0..3.0f64, vx in -3.0..3.0f64, vy in -3.0..3.0f64) {
        let (sys, cert) = double_integrator_system(DoubleIntegratorParams::default(), goal_seeker());
        let cbf = circular_obstacle_cbf(&[1.5, 0.0], 0.5).unwrap();
        let gains = FilterGains::new(1.0, 2.0, Sigma::Value(4.0), 0.5).unwrap();
        let cb = CompositeBarrier::new(cbf, cert, gains, 0.3).unwrap();
        let x = Vector::from_vec(vec![px, py, vx, vy]);
        prop_assert!((cb.barrier_b_delta(&sys, &x) - cb.barrier_b(&sys, &x) - cb.inflation()).abs() <= 1e-12);
        prop_assert!((cb.inflation() - 4.0 * 0.09 / 4.0).abs() <= 1e-12);
    }

    #[test]
    fn quadrotor_steps_keep_unit_quaternions(wx in -3.0..3.0f64, wy in -3.0..3.0f64, wz in -3.0..3.0f64, thrust in 0.0..20.0f64) {
        let params = QuadrotorParams::default();
        let fom = quadrotor_fom(params);
        let u = Vector::from_vec(vec![wx, wy, wz, thrust]);
        let field = |_: f64, x: &Vector| quadrotor_dynamics(&params, x, &u).unwrap();
        let mut x = QuadrotorState::level([0.0, 0.0, 1.0], [0.0; 3]).to_vector();
        for k in 0..50 {
            x = rk4_step(&field, k as f64 * 0.01, &x, 0.01);
            fom.normalize(&mut x);
        }
        prop_assert!((x.rows(3, 4).norm() - 1.0).abs() <= 1e-12);
    }
}
