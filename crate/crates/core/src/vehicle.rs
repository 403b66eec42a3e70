//! Plant models: car-like kinematics, unicycle steering kinematics, and the
//! differential-drive platform with its DC motor torque law.
//!
//! Wheel subscripts follow a single left/right convention. Motor-side
//! quantities that are sometimes written with `s`/`d` subscripts map as
//! `s -> l` and `d -> r`.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::Method;

/// Physical and electrical constants of the platform and its two drive motors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobotParams {
    /// Platform mass, kg.
    pub mass: f64,
    /// Moment of inertia about the vertical axis, kg m^2.
    pub inertia: f64,
    /// Wheel radius, m.
    pub wheel_radius: f64,
    /// Half the distance between the rear wheels, m.
    pub half_track: f64,
    /// Axle separation of the car-like model, m.
    pub wheelbase: f64,
    pub gear_ratio: f64,
    /// Motor torque constant, N m / A.
    pub torque_constant: f64,
    /// Terminal resistance, ohm.
    pub resistance: f64,
    /// Back-EMF constant, V per motor rpm.
    pub back_emf_constant: f64,
    /// No-load current, A.
    pub no_load_current: f64,
    /// Linear speed bound, m/s.
    pub v_max: f64,
    /// Rotation speed bound, rad/s.
    pub omega_max: f64,
    /// Motor voltage saturation, V.
    pub u_max: f64,
    /// Mechanical steering limit of the car-like model, rad.
    pub steer_max: f64,
}

impl Default for RobotParams {
    fn default() -> Self {
        Self {
            mass: 10.0,
            inertia: 0.5,
            wheel_radius: 0.1,
            half_track: 0.25,
            wheelbase: 0.5,
            gear_ratio: 20.0,
            torque_constant: 0.05,
            resistance: 1.0,
            back_emf_constant: 0.01,
            no_load_current: 0.0,
            v_max: 1.0,
            omega_max: 2.0,
            u_max: 24.0,
            steer_max: PI / 3.0,
        }
    }
}

impl RobotParams {
    /// Checks every documented range. `u_max = 0` is accepted and models an
    /// actuator that can produce no voltage at all.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("mass", self.mass),
            ("inertia", self.inertia),
            ("wheel_radius", self.wheel_radius),
            ("half_track", self.half_track),
            ("wheelbase", self.wheelbase),
            ("torque_constant", self.torque_constant),
            ("resistance", self.resistance),
            ("v_max", self.v_max),
            ("omega_max", self.omega_max),
            ("steer_max", self.steer_max),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::param(name, format!("must be > 0, got {value}")));
            }
        }
        let non_negative = [
            ("back_emf_constant", self.back_emf_constant),
            ("no_load_current", self.no_load_current),
            ("u_max", self.u_max),
        ];
        for (name, value) in non_negative {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(Error::param(name, format!("must be >= 0, got {value}")));
            }
        }
        if !(self.gear_ratio >= 1.0 && self.gear_ratio.is_finite()) {
            return Err(Error::param(
                "gear_ratio",
                format!("must be >= 1, got {}", self.gear_ratio),
            ));
        }
        Ok(())
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn normalize_angle(a: f64) -> f64 {
    let mut r = (a + PI).rem_euclid(TAU) - PI;
    if r <= -PI {
        r += TAU;
    }
    r
}

/// Planar pose of the midpoint between the rear wheels.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Posture {
    pub x: f64,
    pub y: f64,
    /// Heading, always in `(-pi, pi]`.
    pub theta: f64,
}

impl Posture {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }
}

/// Time derivative of a [`Posture`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PostureRate {
    pub x_dot: f64,
    pub y_dot: f64,
    pub theta_dot: f64,
}

/// Linear velocity along the main axis and rotation velocity.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VelocityState {
    pub v: f64,
    pub omega: f64,
}

impl VelocityState {
    pub fn new(v: f64, omega: f64) -> Self {
        Self { v, omega }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WheelVelocities {
    pub v_l: f64,
    pub v_r: f64,
}

impl WheelVelocities {
    /// Recovers the body velocities from the two rear-wheel speeds.
    pub fn to_body(self, half_track: f64) -> VelocityState {
        VelocityState {
            v: 0.5 * (self.v_l + self.v_r),
            omega: (self.v_r - self.v_l) / (2.0 * half_track),
        }
    }
}

/// Left/right motor terminal voltages.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MotorCommand {
    pub u_l: f64,
    pub u_r: f64,
}

impl MotorCommand {
    pub const ZERO: MotorCommand = MotorCommand { u_l: 0.0, u_r: 0.0 };

    pub fn new(u_l: f64, u_r: f64) -> Self {
        Self { u_l, u_r }
    }

    pub fn norm(self) -> f64 {
        self.u_l.hypot(self.u_r)
    }
}

impl std::ops::Add for MotorCommand {
    type Output = MotorCommand;

    fn add(self, rhs: MotorCommand) -> MotorCommand {
        MotorCommand::new(self.u_l + rhs.u_l, self.u_r + rhs.u_r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WheelTorques {
    pub p_l: f64,
    pub p_r: f64,
}

/// Body accelerations produced by the platform dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BodyAccel {
    pub v_dot: f64,
    pub omega_dot: f64,
}

/// Multiplicative deviations of the true plant from the nominal parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UncertaintySpec {
    pub mass_factor: f64,
    pub radius_factor: f64,
    pub inertia_factor: f64,
}

impl Default for UncertaintySpec {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl UncertaintySpec {
    pub const IDENTITY: UncertaintySpec = UncertaintySpec {
        mass_factor: 1.0,
        radius_factor: 1.0,
        inertia_factor: 1.0,
    };

    pub fn validate(&self) -> Result<()> {
        for (name, f) in [
            ("mass_factor", self.mass_factor),
            ("radius_factor", self.radius_factor),
            ("inertia_factor", self.inertia_factor),
        ] {
            if !(f > 0.0 && f.is_finite()) {
                return Err(Error::param(name, format!("factor must be > 0, got {f}")));
            }
        }
        Ok(())
    }
}

/// Builds the true-plant parameter set from the nominal one.
pub fn perturb_params(nominal: &RobotParams, spec: &UncertaintySpec) -> Result<RobotParams> {
    spec.validate()?;
    let mut p = *nominal;
    p.mass *= spec.mass_factor;
    p.wheel_radius *= spec.radius_factor;
    p.inertia *= spec.inertia_factor;
    Ok(p)
}

/// Sign used for the lateral rate of the car-like model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignConvention {
    /// `y_dot = -sin(theta) cos(phi) u1`, the form with a flipped lateral axis.
    AsPrinted,
    /// `y_dot = +sin(theta) cos(phi) u1`, consistent with the unicycle model.
    #[default]
    Standard,
}

/// State of the seven-component car-like kinematic model. The same struct
/// carries its time derivative.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CarKinState {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    /// Steering angle of the orientable wheel.
    pub phi: f64,
    /// Accumulated wheel rotation angles.
    pub phi_c: f64,
    pub phi_s: f64,
    pub phi_d: f64,
}

impl CarKinState {
    pub fn to_array(self) -> [f64; 7] {
        [
            self.x, self.y, self.theta, self.phi, self.phi_c, self.phi_s, self.phi_d,
        ]
    }

    pub fn from_array(a: [f64; 7]) -> Self {
        Self {
            x: a[0],
            y: a[1],
            theta: a[2],
            phi: a[3],
            phi_c: a[4],
            phi_s: a[5],
            phi_d: a[6],
        }
    }
}

/// Rates of the car-like model for driving speed `u1` and steering rate `u2`.
pub fn kinematic_derivative(
    s: &CarKinState,
    u1: f64,
    u2: f64,
    p: &RobotParams,
    sign: SignConvention,
) -> Result<CarKinState> {
    p.validate()?;
    if s.phi.abs() > p.steer_max * (1.0 + 1e-12) {
        return Err(Error::Domain(format!(
            "steering angle {} exceeds limit {}",
            s.phi, p.steer_max
        )));
    }
    Ok(car_rates(s, u1, u2, p, sign))
}

fn car_rates(
    s: &CarKinState,
    u1: f64,
    u2: f64,
    p: &RobotParams,
    sign: SignConvention,
) -> CarKinState {
    let (sin_th, cos_th) = s.theta.sin_cos();
    let (sin_phi, cos_phi) = s.phi.sin_cos();
    let lateral = match sign {
        SignConvention::AsPrinted => -1.0,
        SignConvention::Standard => 1.0,
    };
    let d_over_l = p.half_track / p.wheelbase;
    let r = p.wheel_radius;
    CarKinState {
        x: cos_th * cos_phi * u1,
        y: lateral * sin_th * cos_phi * u1,
        theta: sin_phi * u1 / p.wheelbase,
        phi: u2,
        phi_c: u1 / r,
        phi_s: (cos_phi + d_over_l * sin_phi) * u1 / r,
        phi_d: (cos_phi - d_over_l * sin_phi) * u1 / r,
    }
}

/// Integrates the car-like model under a time-varying input law.
///
/// The steering angle is held at its mechanical stop if a step would carry
/// it past `steer_max`, and the heading is wrapped after every step. Returns
/// `steps + 1` states including the initial one.
pub fn simulate_car_kinematics<F>(
    initial: CarKinState,
    mut inputs: F,
    p: &RobotParams,
    sign: SignConvention,
    method: Method,
    dt: f64,
    steps: usize,
) -> Result<Vec<CarKinState>>
where
    F: FnMut(f64, &CarKinState) -> (f64, f64),
{
    p.validate()?;
    if initial.phi.abs() > p.steer_max {
        return Err(Error::Domain(format!(
            "initial steering angle {} exceeds limit {}",
            initial.phi, p.steer_max
        )));
    }
    let mut out = Vec::with_capacity(steps + 1);
    let mut state = initial;
    state.theta = normalize_angle(state.theta);
    out.push(state);
    for k in 0..steps {
        let t = k as f64 * dt;
        let (u1, u2) = inputs(t, &state);
        let next = method.step(
            |_, a| car_rates(&CarKinState::from_array(*a), u1, u2, p, sign).to_array(),
            &state.to_array(),
            t,
            dt,
        )?;
        state = CarKinState::from_array(next);
        state.phi = state.phi.clamp(-p.steer_max, p.steer_max);
        state.theta = normalize_angle(state.theta);
        out.push(state);
    }
    Ok(out)
}

/// Unicycle kinematics: `(v cos theta, v sin theta, omega)`.
pub fn steering_kinematics(pose: &Posture, eta: &VelocityState) -> PostureRate {
    let (sin_th, cos_th) = pose.theta.sin_cos();
    PostureRate {
        x_dot: eta.v * cos_th,
        y_dot: eta.v * sin_th,
        theta_dot: eta.omega,
    }
}

/// Drive torque at one wheel for terminal voltage `u` and wheel linear speed
/// `v_wheel`. The `60 N / (2 pi r)` factor converts wheel speed to motor rpm.
pub fn motor_torque(u: f64, v_wheel: f64, p: &RobotParams) -> f64 {
    let rpm_per_mps = 60.0 * p.gear_ratio / (2.0 * PI * p.wheel_radius);
    let km_over_ra = p.torque_constant / p.resistance;
    p.gear_ratio
        * (km_over_ra * u
            - km_over_ra * p.back_emf_constant * rpm_per_mps * v_wheel
            - p.torque_constant * p.no_load_current)
}

pub fn wheel_velocities(eta: &VelocityState, p: &RobotParams) -> WheelVelocities {
    WheelVelocities {
        v_l: eta.v - p.half_track * eta.omega,
        v_r: eta.v + p.half_track * eta.omega,
    }
}

pub fn wheel_torques(eta: &VelocityState, u: &MotorCommand, p: &RobotParams) -> WheelTorques {
    let w = wheel_velocities(eta, p);
    WheelTorques {
        p_l: motor_torque(u.u_l, w.v_l, p),
        p_r: motor_torque(u.u_r, w.v_r, p),
    }
}

/// Platform dynamics. The `1/(2r)` and `r/(2D)` torque coefficients are
/// kept here and nowhere else.
pub fn dynamic_derivative(eta: &VelocityState, u: &MotorCommand, p: &RobotParams) -> BodyAccel {
    let tq = wheel_torques(eta, u, p);
    let r = p.wheel_radius;
    BodyAccel {
        v_dot: (tq.p_r + tq.p_l) / (2.0 * r) / p.mass,
        omega_dot: r / (2.0 * p.half_track) * (tq.p_r - tq.p_l) / p.inertia,
    }
}

/// Componentwise clamp to the velocity bounds.
pub fn clamp_velocities(eta: &VelocityState, p: &RobotParams) -> VelocityState {
    VelocityState {
        v: eta.v.clamp(-p.v_max, p.v_max),
        omega: eta.omega.clamp(-p.omega_max, p.omega_max),
    }
}

/// Index layout of the differential-drive plant state `[x, y, theta, v, omega]`.
pub const PLANT_DIM: usize = 5;

/// Full differential-drive plant: unicycle kinematics driven by the motor
/// and platform dynamics.
pub fn plant_derivative(
    s: &[f64; PLANT_DIM],
    u: &MotorCommand,
    p: &RobotParams,
) -> [f64; PLANT_DIM] {
    let eta = VelocityState::new(s[3], s[4]);
    let (sin_th, cos_th) = s[2].sin_cos();
    let acc = dynamic_derivative(&eta, u, p);
    [
        eta.v * cos_th,
        eta.v * sin_th,
        eta.omega,
        acc.v_dot,
        acc.omega_dot,
    ]
}
