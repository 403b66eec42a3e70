use std::f64::consts::PI;

use proptest::prelude::*;

use wmr_sim::config::ExperimentFile;
use wmr_sim::controllers::{
    kanayama_control, pid_step, posture_error, saturate, velocity_feedback, ChannelGains,
    KanayamaGains, PidGains, PidState, VelocityPidState,
};
use wmr_sim::integrator::{euler_step, rk4_step};
use wmr_sim::nn::{feedback_error_learn_step, Mlp};
use wmr_sim::sim::{run_simulation, NnConfig, SimConfig};
use wmr_sim::vehicle::{
    clamp_velocities, dynamic_derivative, motor_torque, normalize_angle, perturb_params,
    wheel_velocities, MotorCommand, Posture, RobotParams, UncertaintySpec, VelocityState,
};

fn angle() -> impl Strategy<Value = f64> {
    -PI..PI
}

fn params() -> impl Strategy<Value = RobotParams> {
    (
        1.0..50.0f64,
        0.05..5.0f64,
        0.02..0.5f64,
        0.05..1.0f64,
        1.0..100.0f64,
        0.001..0.5f64,
    )
        .prop_map(|(mass, inertia, r, d, n, km)| RobotParams {
            mass,
            inertia,
            wheel_radius: r,
            half_track: d,
            gear_ratio: n,
            torque_constant: km,
            ..RobotParams::default()
        })
}

fn short_run(nn: bool, mass_factor: f64) -> SimConfig {
    let robot = RobotParams::default();
    SimConfig {
        duration: 1.0,
        uncertainty: UncertaintySpec {
            mass_factor,
            ..UncertaintySpec::IDENTITY
        },
        nn: nn.then(|| NnConfig::with_defaults(3, &robot)),
        robot,
        ..SimConfig::default()
    }
}

proptest! {
    #[test]
    fn normalized_angle_in_half_open_interval(a in -100.0..100.0f64) {
        let n = normalize_angle(a);
        prop_assert!(n > -PI && n <= PI);
        prop_assert!(((a - n) / (2.0 * PI) - ((a - n) / (2.0 * PI)).round()).abs() < 1e-9);
    }

    #[test]
    fn clamp_and_saturate_are_idempotent(v in -10.0..10.0f64, w in -10.0..10.0f64, ul in -100.0..100.0f64, ur in -100.0..100.0f64) {
        let p = RobotParams::default();
        let eta = VelocityState::new(v, w);
        let once = clamp_velocities(&eta, &p);
        prop_assert_eq!(clamp_velocities(&once, &p), once);
        prop_assert!(once.v.abs() <= p.v_max && once.omega.abs() <= p.omega_max);
        let u = MotorCommand::new(ul, ur);
        let s = saturate(&u, p.u_max);
        prop_assert_eq!(saturate(&s, p.u_max), s);
        prop_assert!(s.u_l.abs() <= p.u_max && s.u_r.abs() <= p.u_max);
    }

    #[test]
    fn posture_error_invariant_under_rigid_motion(
        x in -5.0..5.0f64, y in -5.0..5.0f64, th in angle(),
        xr in -5.0..5.0f64, yr in -5.0..5.0f64, thr in angle(),
        tx in -10.0..10.0f64, ty in -10.0..10.0f64, rot in angle(),
    ) {
        let e = posture_error(&Posture::new(x, y, th), &Posture::new(xr, yr, thr));
        let (s, c) = rot.sin_cos();
        let mv = |px: f64, py: f64, pt: f64| Posture::new(c * px - s * py + tx, s * px + c * py + ty, pt + rot);
        let e2 = posture_error(&mv(x, y, th), &mv(xr, yr, thr));
        prop_assert!((e.e_x - e2.e_x).abs() < 1e-9);
        prop_assert!((e.e_y - e2.e_y).abs() < 1e-9);
        prop_assert!(normalize_angle(e.e_theta - e2.e_theta).abs() < 1e-9);
    }

    #[test]
    fn kanayama_with_zero_gains_passes_reference(ex in -1.0..1.0f64, ey in -1.0..1.0f64, et in angle(), vr in -1.0..1.0f64, wr in -2.0..2.0f64) {
        let g = KanayamaGains { k_x: 0.0, k_y: 0.0, k_theta: 0.0 };
        let e = wmr_sim::controllers::PostureError { e_x: ex, e_y: ey, e_theta: et };
        let out = kanayama_control(&e, vr, wr, &g);
        prop_assert_eq!(out.v, vr * et.cos());
        prop_assert_eq!(out.omega, wr);
    }

    #[test]
    fn wheel_round_trip(v in -2.0..2.0f64, w in -4.0..4.0f64, p in params()) {
        let eta = VelocityState::new(v, w);
        let back = wheel_velocities(&eta, &p).to_body(p.half_track);
        prop_assert!((back.v - v).abs() <= 1e-12);
        prop_assert!((back.omega - w).abs() <= 1e-12);
    }

    #[test]
    fn motor_torque_is_affine(u1 in -24.0..24.0f64, u2 in -24.0..24.0f64, v1 in -2.0..2.0f64, v2 in -2.0..2.0f64, p in params()) {
        let t = |u, v| motor_torque(u, v, &p);
        // Second mixed difference of an affine map vanishes.
        let mixed = t(u1, v1) - t(u2, v1) - t(u1, v2) + t(u2, v2);
        prop_assert!(mixed.abs() <= 1e-9 * (1.0 + t(u1, v1).abs()));
        // Back-EMF term opposes wheel motion.
        prop_assert!((t(u1, v1) - t(u1, 0.0)) * v1 <= 0.0);
    }

    #[test]
    fn dynamics_split_into_symmetric_and_antisymmetric_drive(u in -24.0..24.0f64, p in params()) {
        let p = RobotParams { no_load_current: 0.0, ..p };
        let rest = VelocityState::new(0.0, 0.0);
        let sym = dynamic_derivative(&rest, &MotorCommand::new(u, u), &p);
        prop_assert!(sym.omega_dot.abs() <= 1e-12 * (1.0 + sym.v_dot.abs()));
        let anti = dynamic_derivative(&rest, &MotorCommand::new(-u, u), &p);
        prop_assert!(anti.v_dot.abs() <= 1e-12 * (1.0 + anti.omega_dot.abs()));
        prop_assert!(anti.omega_dot * u >= 0.0);
    }

    #[test]
    fn back_emf_slows_a_coasting_robot(v in 0.01..1.0f64, p in params()) {
        let p = RobotParams { no_load_current: 0.0, ..p };
        let acc = dynamic_derivative(&VelocityState::new(v, 0.0), &MotorCommand::ZERO, &p);
        prop_assert!(acc.v_dot < 0.0);
        let acc = dynamic_derivative(&VelocityState::new(-v, 0.0), &MotorCommand::ZERO, &p);
        prop_assert!(acc.v_dot > 0.0);
    }

    #[test]
    fn pid_integral_never_exceeds_bound(e in -100.0..100.0f64, steps in 1usize..500, i_max in 0.01..10.0f64) {
        let g = ChannelGains { k_p: 1.0, k_i: 1.0, k_d: 0.0, i_max };
        let mut s = PidState::default();
        for _ in 0..steps {
            s = pid_step(s, &g, e, 0.01).1;
            prop_assert!(s.integral.abs() <= i_max);
        }
    }

    #[test]
    fn proportional_pid_is_memoryless(e in -10.0..10.0f64, prev in -10.0..10.0f64, integ in -1.0..1.0f64, kp in 0.0..100.0f64) {
        let g = ChannelGains { k_p: kp, k_i: 0.0, k_d: 0.0, i_max: 1.0 };
        let state = PidState { integral: integ, prev_error: Some(prev) };
        prop_assert_eq!(pid_step(state, &g, e, 0.01).0, pid_step(PidState::default(), &g, e, 0.01).0);
    }

    #[test]
    fn velocity_mixing_is_linear(ev in -1.0..1.0f64, ew in -1.0..1.0f64, a in -5.0..5.0f64) {
        let ch = ChannelGains { k_p: 7.0, k_i: 0.0, k_d: 0.0, i_max: 1.0 };
        let g = PidGains { v: ch, omega: ChannelGains { k_p: 3.0, ..ch } };
        let zero = VelocityState::new(0.0, 0.0);
        let st = VelocityPidState::default();
        let (u1, _) = velocity_feedback(&VelocityState::new(ev, ew), &zero, &st, &g, 0.01);
        let (ua, _) = velocity_feedback(&VelocityState::new(a * ev, a * ew), &zero, &st, &g, 0.01);
        prop_assert!((ua.u_l - a * u1.u_l).abs() <= 1e-12 * (1.0 + ua.u_l.abs()));
        prop_assert!((ua.u_r - a * u1.u_r).abs() <= 1e-12 * (1.0 + ua.u_r.abs()));
    }

    #[test]
    fn rk4_equals_euler_for_constant_fields(x0 in -10.0..10.0f64, c in -10.0..10.0f64, h in 1e-4..1.0f64) {
        let f = |_: f64, _: &[f64; 1]| [c];
        let a = rk4_step(f, &[x0], 0.0, h).unwrap();
        let b = euler_step(f, &[x0], 0.0, h).unwrap();
        prop_assert!((a[0] - b[0]).abs() <= 4.0 * f64::EPSILON * (x0.abs() + (c * h).abs()));
    }

    #[test]
    fn learning_step_bounded_by_clip(seed in 0u64..1000, ul in -50.0..50.0f64, ur in -50.0..50.0f64, lr in 1e-4..1e-1f64, clip in 0.1..10.0f64) {
        let mut net = Mlp::new(6, 8, 2, seed, 0.5).unwrap();
        let before = net.parameters();
        let x = [0.5, -0.3, 0.1, 0.0, 0.4, -0.2];
        feedback_error_learn_step(&mut net, &x, &MotorCommand::new(ul, ur), lr, Some(clip)).unwrap();
        let step: f64 = net.parameters().iter().zip(&before).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        prop_assert!(step <= lr * clip * (1.0 + 1e-12));
    }

    #[test]
    fn training_is_bit_reproducible(seed in 0u64..1000) {
        let train = || {
            let mut net = Mlp::new(6, 8, 2, seed, 0.1).unwrap();
            for k in 0..50 {
                let s = k as f64 * 0.1;
                let x = [s.sin(), s.cos(), 0.1, -0.1, 0.5 * s.sin(), 0.2];
                feedback_error_learn_step(&mut net, &x, &MotorCommand::new(s.cos(), -s.sin()), 1e-2, Some(10.0)).unwrap();
            }
            net.parameters().iter().map(|w| w.to_bits()).collect::<Vec<_>>()
        };
        prop_assert_eq!(train(), train());
    }

    #[test]
    fn perturbation_scales_only_flagged_fields(m in 0.1..3.0f64, r in 0.1..3.0f64, j in 0.1..3.0f64) {
        let p = RobotParams::default();
        let q = perturb_params(&p, &UncertaintySpec { mass_factor: m, radius_factor: r, inertia_factor: j }).unwrap();
        prop_assert_eq!(q.mass, p.mass * m);
        prop_assert_eq!(q.wheel_radius, p.wheel_radius * r);
        prop_assert_eq!(q.inertia, p.inertia * j);
        prop_assert_eq!(RobotParams { mass: p.mass, wheel_radius: p.wheel_radius, inertia: p.inertia, ..q }, p);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn composed_command_is_saturated_sum(mass_factor in 0.8..2.0f64) {
        let cfg = short_run(true, mass_factor);
        let log = run_simulation(&cfg).unwrap();
        for r in &log {
            prop_assert_eq!(r.u_total, saturate(&(r.u_fb + r.u_ff), cfg.robot.u_max));
        }
        prop_assert!(log.windows(2).all(|w| w[1].t > w[0].t));
    }

    #[test]
    fn disabled_network_ignores_its_hyperparameters(lr in 1e-5..1e-1f64, hidden in 1usize..20, seed in 0u64..100) {
        let dir = std::path::Path::new(".");
        let plain = ExperimentFile::parse("[uncertainty]\nmass_factor = 1.3\n[sim]\nduration = 1.0\n", "<a>").unwrap();
        let tuned = ExperimentFile::parse(
            &format!(
                "[uncertainty]\nmass_factor = 1.3\n[sim]\nduration = 1.0\n\
                 [nn]\nenabled = false\nlearning_rate = {lr:?}\nhidden = {hidden}\nseed = {seed}\n"
            ),
            "<b>",
        )
        .unwrap();
        let a = run_simulation(&plain.to_sim_config(None, dir).unwrap()).unwrap();
        let b = run_simulation(&tuned.to_sim_config(None, dir).unwrap()).unwrap();
        prop_assert_eq!(a, b);
    }
}
