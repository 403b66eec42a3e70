//! Conventional control layer: the posture-tracking motion controller that
//! generates velocity references, and the per-channel PID velocity loop
//! that produces the feedback voltage command.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vehicle::{normalize_angle, MotorCommand, Posture, VelocityState};

/// Reference-minus-actual posture expressed in the vehicle body frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PostureError {
    pub e_x: f64,
    pub e_y: f64,
    pub e_theta: f64,
}

pub fn posture_error(current: &Posture, reference: &Posture) -> PostureError {
    let (s, c) = current.theta.sin_cos();
    let dx = reference.x - current.x;
    let dy = reference.y - current.y;
    PostureError {
        e_x: c * dx + s * dy,
        e_y: -s * dx + c * dy,
        e_theta: normalize_angle(reference.theta - current.theta),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KanayamaGains {
    pub k_x: f64,
    pub k_y: f64,
    pub k_theta: f64,
}

impl Default for KanayamaGains {
    fn default() -> Self {
        Self {
            k_x: 10.0,
            k_y: 64.0,
            k_theta: 16.0,
        }
    }
}

impl KanayamaGains {
    pub fn validate(&self) -> Result<()> {
        for (name, g) in [
            ("k_x", self.k_x),
            ("k_y", self.k_y),
            ("k_theta", self.k_theta),
        ] {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::param(name, format!("gain must be > 0, got {g}")));
            }
        }
        Ok(())
    }
}

/// Tracking law for a reference moving at `(v_r, omega_r)`:
///
/// ```text
/// v     = v_r cos(e_theta) + k_x e_x
/// omega = omega_r + v_r (k_y e_y + k_theta sin(e_theta))
/// ```
///
/// The result is unclamped; the caller applies the vehicle velocity bounds.
pub fn kanayama_control(
    e: &PostureError,
    v_r: f64,
    omega_r: f64,
    g: &KanayamaGains,
) -> VelocityState {
    VelocityState {
        v: v_r * e.e_theta.cos() + g.k_x * e.e_x,
        omega: omega_r + v_r * (g.k_y * e.e_y + g.k_theta * e.e_theta.sin()),
    }
}

/// Gains of one PID channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelGains {
    pub k_p: f64,
    pub k_i: f64,
    pub k_d: f64,
    /// Bound on the magnitude of the integral accumulator.
    pub i_max: f64,
}

impl Default for ChannelGains {
    fn default() -> Self {
        Self {
            k_p: 80.0,
            k_i: 4.0,
            k_d: 0.0,
            i_max: 10.0,
        }
    }
}

impl ChannelGains {
    pub fn validate(&self, channel: &str) -> Result<()> {
        for (name, g) in [("k_p", self.k_p), ("k_i", self.k_i), ("k_d", self.k_d)] {
            if !(g >= 0.0 && g.is_finite()) {
                return Err(Error::param(
                    format!("{channel}.{name}"),
                    format!("gain must be >= 0, got {g}"),
                ));
            }
        }
        if !(self.i_max > 0.0 && self.i_max.is_finite()) {
            return Err(Error::param(
                format!("{channel}.i_max"),
                format!("must be > 0, got {}", self.i_max),
            ));
        }
        Ok(())
    }
}

/// Gains for the linear-velocity and rotation-velocity channels.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PidGains {
    pub v: ChannelGains,
    pub omega: ChannelGains,
}

impl PidGains {
    pub fn validate(&self) -> Result<()> {
        self.v.validate("v")?;
        self.omega.validate("omega")
    }
}

/// Integral accumulator and last error of one channel.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PidState {
    pub integral: f64,
    /// `None` until the first step; the first derivative is taken as zero.
    pub prev_error: Option<f64>,
}

/// One discrete PID update with an anti-windup clamp on the integral.
pub fn pid_step(state: PidState, g: &ChannelGains, error: f64, dt: f64) -> (f64, PidState) {
    debug_assert!(dt > 0.0);
    let integral = (state.integral + error * dt).clamp(-g.i_max, g.i_max);
    let prev = state.prev_error.unwrap_or(error);
    let derivative = (error - prev) / dt;
    let out = g.k_p * error + g.k_i * integral + g.k_d * derivative;
    (
        out,
        PidState {
            integral,
            prev_error: Some(error),
        },
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VelocityPidState {
    pub v: PidState,
    pub omega: PidState,
}

/// Runs both channels and mixes them into wheel voltages:
/// `u_l = u_v - u_omega`, `u_r = u_v + u_omega`.
pub fn velocity_feedback(
    eta_ref: &VelocityState,
    eta_meas: &VelocityState,
    state: &VelocityPidState,
    g: &PidGains,
    dt: f64,
) -> (MotorCommand, VelocityPidState) {
    let (u_v, v) = pid_step(state.v, &g.v, eta_ref.v - eta_meas.v, dt);
    let (u_w, omega) = pid_step(state.omega, &g.omega, eta_ref.omega - eta_meas.omega, dt);
    (
        MotorCommand::new(u_v - u_w, u_v + u_w),
        VelocityPidState { v, omega },
    )
}

/// Componentwise clamp to `[-u_max, u_max]`.
pub fn saturate(u: &MotorCommand, u_max: f64) -> MotorCommand {
    MotorCommand::new(u.u_l.clamp(-u_max, u_max), u.u_r.clamp(-u_max, u_max))
}

/// True when either side of `u` sits at the voltage bound.
pub fn is_saturated(u: &MotorCommand, u_max: f64) -> bool {
    u.u_l.abs() >= u_max || u.u_r.abs() >= u_max
}
