//! Analytic reference trajectories for the motion controller.
//!
//! Every kind is sampled in closed form and satisfies the unicycle
//! consistency relations `x_dot = v cos(theta)`, `y_dot = v sin(theta)`,
//! `theta_dot = omega` along the whole path.

use std::f64::consts::{FRAC_PI_2, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vehicle::{normalize_angle, Posture};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferencePoint {
    pub posture: Posture,
    pub v_r: f64,
    pub omega_r: f64,
}

/// Geometric description of a reference path. Omitted fields take the
/// values of the default benchmark circle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum TrajectoryKind {
    /// Straight line at constant speed.
    Line {
        #[serde(default)]
        x0: f64,
        #[serde(default)]
        y0: f64,
        #[serde(default)]
        heading: f64,
        #[serde(default = "defaults::speed")]
        speed: f64,
    },
    /// Circle traversed at constant speed. `phase` is the polar angle of
    /// the start point about the center.
    Circle {
        #[serde(default)]
        center_x: f64,
        #[serde(default = "defaults::radius")]
        center_y: f64,
        #[serde(default = "defaults::radius")]
        radius: f64,
        #[serde(default = "defaults::speed")]
        speed: f64,
        #[serde(default = "defaults::phase")]
        phase: f64,
        #[serde(default)]
        clockwise: bool,
    },
    /// Lemniscate of Bernoulli `(a cos s, a sin s cos s) / (1 + sin^2 s)`
    /// with `s = 2 pi t / period`.
    Lemniscate {
        #[serde(default)]
        center_x: f64,
        #[serde(default)]
        center_y: f64,
        #[serde(default = "defaults::radius")]
        scale: f64,
        #[serde(default = "defaults::period")]
        period: f64,
    },
    /// Straight segments between waypoints with turn-in-place at each
    /// corner. Every move uses a trapezoidal speed profile whose ramps are
    /// cubic blends, so speed and acceleration stay continuous.
    Polyline {
        waypoints: Vec<[f64; 2]>,
        #[serde(default = "defaults::speed")]
        speed: f64,
        #[serde(default = "defaults::turn_rate")]
        turn_rate: f64,
        #[serde(default = "defaults::ramp_time")]
        ramp_time: f64,
    },
}

mod defaults {
    pub fn speed() -> f64 {
        0.5
    }
    pub fn radius() -> f64 {
        2.0
    }
    pub fn phase() -> f64 {
        -std::f64::consts::FRAC_PI_2
    }
    pub fn period() -> f64 {
        60.0
    }
    pub fn turn_rate() -> f64 {
        0.5
    }
    pub fn ramp_time() -> f64 {
        1.0
    }
}

impl Default for TrajectoryKind {
    fn default() -> Self {
        TrajectoryKind::Circle {
            center_x: 0.0,
            center_y: 2.0,
            radius: 2.0,
            speed: 0.5,
            phase: -FRAC_PI_2,
            clockwise: false,
        }
    }
}

/// Move profile covering `distance` with peak rate `peak`, cubic ramps of
/// length `ramp` and a constant-rate cruise in between.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Profile {
    distance: f64,
    peak: f64,
    ramp: f64,
    duration: f64,
}

impl Profile {
    fn new(distance: f64, cruise: f64, ramp: f64) -> Self {
        let (peak, duration) = if distance >= cruise * ramp {
            (cruise, 2.0 * ramp + (distance - cruise * ramp) / cruise)
        } else {
            (distance / ramp, 2.0 * ramp)
        };
        Self {
            distance,
            peak,
            ramp,
            duration,
        }
    }

    fn ramp_up(&self, tau: f64) -> (f64, f64) {
        let u = tau / self.ramp;
        (
            self.peak * self.ramp * (u.powi(3) - 0.5 * u.powi(4)),
            self.peak * (3.0 * u * u - 2.0 * u.powi(3)),
        )
    }

    /// Position and rate at local time `tau`.
    fn eval(&self, tau: f64) -> (f64, f64) {
        let tau = tau.clamp(0.0, self.duration);
        if tau <= self.ramp {
            self.ramp_up(tau)
        } else if tau >= self.duration - self.ramp {
            let (s, v) = self.ramp_up(self.duration - tau);
            (self.distance - s, v)
        } else {
            (
                0.5 * self.peak * self.ramp + self.peak * (tau - self.ramp),
                self.peak,
            )
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Segment {
    Translate {
        start: [f64; 2],
        heading: f64,
        profile: Profile,
    },
    Rotate {
        at: [f64; 2],
        from: f64,
        direction: f64,
        profile: Profile,
    },
}

impl Segment {
    fn duration(&self) -> f64 {
        match self {
            Segment::Translate { profile, .. } | Segment::Rotate { profile, .. } => {
                profile.duration
            }
        }
    }

    fn eval(&self, tau: f64) -> ReferencePoint {
        match *self {
            Segment::Translate {
                start,
                heading,
                profile,
            } => {
                let (s, v) = profile.eval(tau);
                let (sn, cs) = heading.sin_cos();
                ReferencePoint {
                    posture: Posture::new(start[0] + s * cs, start[1] + s * sn, heading),
                    v_r: v,
                    omega_r: 0.0,
                }
            }
            Segment::Rotate {
                at,
                from,
                direction,
                profile,
            } => {
                let (a, w) = profile.eval(tau);
                ReferencePoint {
                    posture: Posture::new(at[0], at[1], from + direction * a),
                    v_r: 0.0,
                    omega_r: direction * w,
                }
            }
        }
    }
}

/// A validated trajectory over `[0, duration]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    kind: TrajectoryKind,
    duration: f64,
    segments: Vec<Segment>,
}

impl Trajectory {
    /// Validates the geometry and checks that every emitted reference speed
    /// stays within `v_max` and `omega_max`.
    pub fn new(kind: TrajectoryKind, duration: f64, v_max: f64, omega_max: f64) -> Result<Self> {
        if !(duration >= 0.0 && duration.is_finite()) {
            return Err(Error::param(
                "duration",
                format!("must be >= 0, got {duration}"),
            ));
        }
        let mut segments = Vec::new();
        let (peak_v, peak_w) = match &kind {
            TrajectoryKind::Line { speed, .. } => {
                finite("speed", *speed)?;
                (speed.abs(), 0.0)
            }
            TrajectoryKind::Circle { radius, speed, .. } => {
                if !(*radius > 0.0 && radius.is_finite()) {
                    return Err(Error::param("radius", format!("must be > 0, got {radius}")));
                }
                if !(*speed > 0.0 && speed.is_finite()) {
                    return Err(Error::param("speed", format!("must be > 0, got {speed}")));
                }
                (*speed, speed / radius)
            }
            TrajectoryKind::Lemniscate { scale, period, .. } => {
                if !(*scale > 0.0 && scale.is_finite()) {
                    return Err(Error::param("scale", format!("must be > 0, got {scale}")));
                }
                if !(*period > 0.0 && period.is_finite()) {
                    return Err(Error::param("period", format!("must be > 0, got {period}")));
                }
                lemniscate_peaks(*scale, TAU / period)
            }
            TrajectoryKind::Polyline {
                waypoints,
                speed,
                turn_rate,
                ramp_time,
            } => {
                for (name, x) in [
                    ("speed", *speed),
                    ("turn_rate", *turn_rate),
                    ("ramp_time", *ramp_time),
                ] {
                    if !(x > 0.0 && x.is_finite()) {
                        return Err(Error::param(name, format!("must be > 0, got {x}")));
                    }
                }
                segments = polyline_segments(waypoints, *speed, *turn_rate, *ramp_time)?;
                (*speed, *turn_rate)
            }
        };
        if peak_v > v_max * (1.0 + 1e-12) {
            return Err(Error::param(
                "speed",
                format!("reference speed {peak_v} exceeds v_max {v_max}"),
            ));
        }
        if peak_w > omega_max * (1.0 + 1e-12) {
            return Err(Error::param(
                "rotation_rate",
                format!("reference rotation rate {peak_w} exceeds omega_max {omega_max}"),
            ));
        }
        Ok(Self {
            kind,
            duration,
            segments,
        })
    }

    pub fn kind(&self) -> &TrajectoryKind {
        &self.kind
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    /// Reference at time `t`, `0 <= t <= duration`.
    pub fn sample(&self, t: f64) -> Result<ReferencePoint> {
        if !(t >= 0.0 && t <= self.duration) {
            return Err(Error::Domain(format!(
                "time {t} outside trajectory range [0, {}]",
                self.duration
            )));
        }
        Ok(self.eval(t))
    }

    fn eval(&self, t: f64) -> ReferencePoint {
        match self.kind {
            TrajectoryKind::Line {
                x0,
                y0,
                heading,
                speed,
            } => {
                let (s, c) = heading.sin_cos();
                ReferencePoint {
                    posture: Posture::new(x0 + speed * t * c, y0 + speed * t * s, heading),
                    v_r: speed,
                    omega_r: 0.0,
                }
            }
            TrajectoryKind::Circle {
                center_x,
                center_y,
                radius,
                speed,
                phase,
                clockwise,
            } => {
                let dir = if clockwise { -1.0 } else { 1.0 };
                let omega = dir * speed / radius;
                let angle = phase + omega * t;
                let (s, c) = angle.sin_cos();
                ReferencePoint {
                    posture: Posture::new(
                        center_x + radius * c,
                        center_y + radius * s,
                        angle + dir * FRAC_PI_2,
                    ),
                    v_r: speed,
                    omega_r: omega,
                }
            }
            TrajectoryKind::Lemniscate {
                center_x,
                center_y,
                scale,
                period,
            } => {
                let rate = TAU / period;
                let g = lemniscate_geometry(scale, rate * t);
                let speed_sq = g.dx * g.dx + g.dy * g.dy;
                ReferencePoint {
                    posture: Posture::new(center_x + g.x, center_y + g.y, g.dy.atan2(g.dx)),
                    v_r: rate * speed_sq.sqrt(),
                    omega_r: rate * (g.dx * g.ddy - g.dy * g.ddx) / speed_sq,
                }
            }
            TrajectoryKind::Polyline { .. } => {
                let mut tau = t;
                for seg in &self.segments {
                    if tau <= seg.duration() {
                        return seg.eval(tau);
                    }
                    tau -= seg.duration();
                }
                // Hold the final posture once the path is complete.
                let last = self
                    .segments
                    .last()
                    .expect("polyline has at least one segment");
                last.eval(last.duration())
            }
        }
    }

    /// Time needed to traverse a polyline; `None` for unbounded kinds.
    pub fn path_time(&self) -> Option<f64> {
        match self.kind {
            TrajectoryKind::Polyline { .. } => {
                Some(self.segments.iter().map(Segment::duration).sum())
            }
            _ => None,
        }
    }

    /// Instants where the reference acceleration is not smooth (segment
    /// boundaries and ramp ends of a polyline).
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut t0 = 0.0;
        for seg in &self.segments {
            let p = match seg {
                Segment::Translate { profile, .. } | Segment::Rotate { profile, .. } => profile,
            };
            out.extend([t0, t0 + p.ramp, t0 + p.duration - p.ramp]);
            t0 += p.duration;
        }
        if !self.segments.is_empty() {
            out.push(t0);
        }
        out
    }
}

fn finite(name: &str, x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::param(name, "must be finite"))
    }
}

fn polyline_segments(
    waypoints: &[[f64; 2]],
    speed: f64,
    turn_rate: f64,
    ramp: f64,
) -> Result<Vec<Segment>> {
    if waypoints.len() < 2 {
        return Err(Error::param("waypoints", "need at least two waypoints"));
    }
    let mut segments = Vec::new();
    let mut heading: Option<f64> = None;
    for (i, pair) in waypoints.windows(2).enumerate() {
        let (a, b) = (pair[0], pair[1]);
        let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
        let len = dx.hypot(dy);
        if !(len > 0.0 && len.is_finite()) {
            return Err(Error::param(
                "waypoints",
                format!("waypoints {i} and {} coincide or are not finite", i + 1),
            ));
        }
        let h = dy.atan2(dx);
        if let Some(prev) = heading {
            let turn = normalize_angle(h - prev);
            if turn != 0.0 {
                segments.push(Segment::Rotate {
                    at: a,
                    from: prev,
                    direction: turn.signum(),
                    profile: Profile::new(turn.abs(), turn_rate, ramp),
                });
            }
        }
        segments.push(Segment::Translate {
            start: a,
            heading: h,
            profile: Profile::new(len, speed, ramp),
        });
        heading = Some(h);
    }
    Ok(segments)
}

struct LemniscateGeometry {
    x: f64,
    y: f64,
    dx: f64,
    dy: f64,
    ddx: f64,
    ddy: f64,
}

/// Value, first and second derivative of `n / d` given those of `n` and `d`.
fn quotient(n: [f64; 3], d: [f64; 3]) -> [f64; 3] {
    let f = n[0] / d[0];
    let num1 = n[1] * d[0] - n[0] * d[1];
    let f1 = num1 / (d[0] * d[0]);
    let f2 = (n[2] * d[0] - n[0] * d[2]) / (d[0] * d[0]) - 2.0 * d[1] * num1 / d[0].powi(3);
    [f, f1, f2]
}

/// Lemniscate point and its derivatives with respect to the curve parameter.
fn lemniscate_geometry(a: f64, s: f64) -> LemniscateGeometry {
    let (sin_s, cos_s) = s.sin_cos();
    let (sin_2s, cos_2s) = (2.0 * s).sin_cos();
    let den = [1.0 + sin_s * sin_s, sin_2s, 2.0 * cos_2s];
    let x = quotient([a * cos_s, -a * sin_s, -a * cos_s], den);
    let y = quotient([0.5 * a * sin_2s, a * cos_2s, -2.0 * a * sin_2s], den);
    LemniscateGeometry {
        x: x[0],
        y: y[0],
        dx: x[1],
        dy: y[1],
        ddx: x[2],
        ddy: y[2],
    }
}

/// Largest speed and rotation rate over one lap, from a dense sweep.
fn lemniscate_peaks(a: f64, rate: f64) -> (f64, f64) {
    const N: usize = 4096;
    let mut peak_v: f64 = 0.0;
    let mut peak_w: f64 = 0.0;
    for i in 0..N {
        let g = lemniscate_geometry(a, TAU * i as f64 / N as f64);
        let sq = g.dx * g.dx + g.dy * g.dy;
        peak_v = peak_v.max(rate * sq.sqrt());
        peak_w = peak_w.max((rate * (g.dx * g.ddy - g.dy * g.ddx) / sq).abs());
    }
    (peak_v, peak_w)
}
