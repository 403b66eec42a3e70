//! Closed-loop simulation of the two-level controller.
//!
//! Each control tick runs, in order: reference sampling, posture error,
//! motion control (clamped to the velocity bounds), PID velocity feedback,
//! the optional neural feed-forward with its learning update, and voltage
//! saturation. The plant is then integrated over the control period with
//! the command held constant.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::controllers::{
    is_saturated, kanayama_control, posture_error, saturate, velocity_feedback, KanayamaGains,
    PidGains, VelocityPidState,
};
use crate::error::{Error, Result};
use crate::integrator::Method;
use crate::nn::{self, FeatureScales, Mlp, FEATURE_DIM};
use crate::trajectory::{Trajectory, TrajectoryKind};
use crate::vehicle::{
    clamp_velocities, normalize_angle, perturb_params, plant_derivative, MotorCommand, Posture,
    RobotParams, UncertaintySpec, VelocityState, PLANT_DIM,
};

/// Hyperparameters of the feed-forward network.
#[derive(Debug, Clone, PartialEq)]
pub struct NnConfig {
    pub hidden: usize,
    pub learning_rate: f64,
    /// Gradient-norm bound; `None` disables clipping.
    pub grad_clip: Option<f64>,
    pub init_scale: f64,
    pub seed: u64,
    pub feature_scales: FeatureScales,
    /// Pre-trained weights replacing the random initialization.
    pub initial_weights: Option<Mlp>,
}

impl NnConfig {
    pub fn with_defaults(seed: u64, robot: &RobotParams) -> Self {
        Self {
            hidden: 8,
            learning_rate: 1e-3,
            grad_clip: Some(10.0),
            init_scale: 0.1,
            seed,
            feature_scales: FeatureScales::from_limits(robot.v_max, robot.omega_max),
            initial_weights: None,
        }
    }

    fn build_network(&self) -> Result<Mlp> {
        match &self.initial_weights {
            Some(net) => {
                if net.n_in() != FEATURE_DIM || net.n_out() != 2 {
                    return Err(Error::param(
                        "nn.weights_file",
                        format!(
                            "network is {}-{}-{}, expected {FEATURE_DIM}-*-2",
                            net.n_in(),
                            net.n_hidden(),
                            net.n_out()
                        ),
                    ));
                }
                Ok(net.clone())
            }
            None => Mlp::new(FEATURE_DIM, self.hidden, 2, self.seed, self.init_scale),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 {
            return Err(Error::param("nn.hidden", "must be >= 1"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::param("nn.learning_rate", "must be >= 0"));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::param("nn.grad_clip", "must be > 0"));
            }
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return Err(Error::param("nn.init_scale", "must be >= 0"));
        }
        self.feature_scales.validate()
    }
}

/// Everything needed to reproduce one closed-loop run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Parameters the controller was designed for.
    pub robot: RobotParams,
    /// Deviation of the simulated plant from `robot`.
    pub uncertainty: UncertaintySpec,
    pub trajectory: TrajectoryKind,
    pub motion: KanayamaGains,
    pub velocity: PidGains,
    /// `None` runs the PID loop alone.
    pub nn: Option<NnConfig>,
    pub plant_dt: f64,
    /// Must be an integer multiple of `plant_dt`.
    pub control_period: f64,
    pub duration: f64,
    pub integrator: Method,
    /// Standard deviation of additive Gaussian noise on measured `(v, omega)`.
    pub noise_std: VelocityState,
    /// Seed of the measurement-noise generator.
    pub seed: u64,
    /// Start posture; defaults to the reference posture at `t = 0`.
    pub initial_posture: Option<Posture>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            robot: RobotParams::default(),
            uncertainty: UncertaintySpec::IDENTITY,
            trajectory: TrajectoryKind::default(),
            motion: KanayamaGains::default(),
            velocity: PidGains::default(),
            nn: None,
            plant_dt: 1e-3,
            control_period: 1e-2,
            duration: 60.0,
            integrator: Method::Rk4,
            noise_std: VelocityState::default(),
            seed: 0,
            initial_posture: None,
        }
    }
}

impl SimConfig {
    /// Plant substeps per control tick.
    pub fn substeps(&self) -> Result<usize> {
        if !(self.plant_dt > 0.0 && self.plant_dt.is_finite()) {
            return Err(Error::param("sim.plant_dt", "must be > 0"));
        }
        if !(self.control_period > 0.0 && self.control_period.is_finite()) {
            return Err(Error::param("sim.control_period", "must be > 0"));
        }
        let ratio = self.control_period / self.plant_dt;
        let n = ratio.round();
        if n < 1.0 || (ratio - n).abs() > 1e-9 * n {
            return Err(Error::param(
                "sim.control_period",
                format!(
                    "must be an integer multiple of plant_dt ({} / {} = {ratio})",
                    self.control_period, self.plant_dt
                ),
            ));
        }
        Ok(n as usize)
    }

    /// Number of control ticks, `floor(duration / control_period)`.
    pub fn ticks(&self) -> usize {
        (self.duration / self.control_period * (1.0 + 1e-12)).floor() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let prefixed = |section: &str, e: Error| match e {
            Error::InvalidParameter { name, reason } => Error::InvalidParameter {
                name: format!("{section}.{name}"),
                reason,
            },
            other => other,
        };
        self.robot.validate().map_err(|e| prefixed("robot", e))?;
        self.uncertainty
            .validate()
            .map_err(|e| prefixed("uncertainty", e))?;
        self.motion
            .validate()
            .map_err(|e| prefixed("motion_controller", e))?;
        self.velocity
            .validate()
            .map_err(|e| prefixed("velocity_controller", e))?;
        if let Some(nn) = &self.nn {
            nn.validate()?;
            nn.build_network()?;
        }
        self.substeps()?;
        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            return Err(Error::param("sim.duration", "must be >= 0"));
        }
        for (name, s) in [
            ("sim.noise_v_std", self.noise_std.v),
            ("sim.noise_omega_std", self.noise_std.omega),
        ] {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::param(name, "must be >= 0"));
            }
        }
        if let Some(p) = &self.initial_posture {
            if !(p.x.is_finite() && p.y.is_finite() && p.theta.is_finite()) {
                return Err(Error::param("sim.initial", "posture must be finite"));
            }
        }
        Trajectory::new(
            self.trajectory.clone(),
            self.duration,
            self.robot.v_max,
            self.robot.omega_max,
        )
        .map_err(|e| prefixed("trajectory", e))?;
        Ok(())
    }
}

/// One row of the run log, recorded at every control tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRecord {
    pub t: f64,
    pub reference: Posture,
    pub actual: Posture,
    /// Feed-forward velocities of the reference trajectory.
    pub eta_traj: VelocityState,
    /// Motion-controller output after clamping.
    pub eta_ref: VelocityState,
    pub eta_meas: VelocityState,
    pub u_fb: MotorCommand,
    pub u_ff: MotorCommand,
    /// Command applied to the plant, after saturation.
    pub u_total: MotorCommand,
    pub e_x: f64,
    pub e_y: f64,
    pub e_theta: f64,
    /// `|U_fb|^2`, the quantity feedback-error learning drives down.
    pub fb_loss: f64,
}

/// Plant state after one integration substep, with the command applied
/// during it. Only recorded when enabled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Substep {
    pub t: f64,
    pub tick: usize,
    pub u: MotorCommand,
    pub state: [f64; PLANT_DIM],
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RunError {
    #[error("invalid configuration: {0}")]
    Config(Error),
    /// The run stopped early; `log` holds every record produced before the failure.
    #[error("run aborted at tick {tick}: {source}")]
    Aborted {
        tick: usize,
        source: Error,
        log: Vec<LogRecord>,
    },
}

/// Mutable context of a single run.
#[derive(Debug, Clone)]
pub struct Simulation {
    cfg: SimConfig,
    plant: RobotParams,
    trajectory: Trajectory,
    substeps: usize,
    ticks: usize,
    tick: usize,
    state: [f64; PLANT_DIM],
    pid: VelocityPidState,
    net: Option<Mlp>,
    prev_ref: Option<VelocityState>,
    rng: ChaCha8Rng,
    noise: Option<(Normal<f64>, Normal<f64>)>,
    force_zero_feedback: bool,
    substep_log: Option<Vec<Substep>>,
}

impl Simulation {
    pub fn new(cfg: SimConfig) -> Result<Self> {
        cfg.validate()?;
        let plant = perturb_params(&cfg.robot, &cfg.uncertainty)?;
        let trajectory = Trajectory::new(
            cfg.trajectory.clone(),
            cfg.duration,
            cfg.robot.v_max,
            cfg.robot.omega_max,
        )?;
        let start = match cfg.initial_posture {
            Some(p) => p,
            None => trajectory.sample(0.0)?.posture,
        };
        let net = cfg.nn.as_ref().map(NnConfig::build_network).transpose()?;
        let noise = if cfg.noise_std.v > 0.0 || cfg.noise_std.omega > 0.0 {
            let n =
                |s: f64| Normal::new(0.0, s).map_err(|e| Error::param("sim.noise", e.to_string()));
            Some((n(cfg.noise_std.v)?, n(cfg.noise_std.omega)?))
        } else {
            None
        };
        Ok(Self {
            substeps: cfg.substeps()?,
            ticks: cfg.ticks(),
            tick: 0,
            state: [start.x, start.y, normalize_angle(start.theta), 0.0, 0.0],
            pid: VelocityPidState::default(),
            net,
            prev_ref: None,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            noise,
            force_zero_feedback: false,
            substep_log: None,
            plant,
            trajectory,
            cfg,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    /// Parameters of the simulated (true) plant.
    pub fn plant_params(&self) -> &RobotParams {
        &self.plant
    }

    pub fn network(&self) -> Option<&Mlp> {
        self.net.as_ref()
    }

    pub fn into_network(self) -> Option<Mlp> {
        self.net
    }

    pub fn tick(&self) -> usize {
        self.tick
    }

    pub fn total_ticks(&self) -> usize {
        self.ticks
    }

    pub fn is_finished(&self) -> bool {
        self.tick >= self.ticks
    }

    pub fn plant_state(&self) -> [f64; PLANT_DIM] {
        self.state
    }

    pub fn posture(&self) -> Posture {
        Posture::new(self.state[0], self.state[1], self.state[2])
    }

    /// Test hook: replace the feedback command by zero at every tick, so the
    /// network receives no teaching signal.
    pub fn force_zero_feedback(&mut self, on: bool) {
        self.force_zero_feedback = on;
    }

    /// Records every plant substep (debug aid for checking the hold).
    pub fn record_substeps(&mut self, on: bool) {
        self.substep_log = if on { Some(Vec::new()) } else { None };
    }

    pub fn substeps_log(&self) -> &[Substep] {
        self.substep_log.as_deref().unwrap_or(&[])
    }

    fn measure(&mut self) -> VelocityState {
        let mut eta = VelocityState::new(self.state[3], self.state[4]);
        if let Some((nv, nw)) = &self.noise {
            eta.v += nv.sample(&mut self.rng);
            eta.omega += nw.sample(&mut self.rng);
        }
        eta
    }

    /// Computes the command for time `t` from the current plant state and
    /// updates controller and learner state.
    pub fn control_step(&mut self, t: f64) -> Result<(MotorCommand, LogRecord)> {
        let dt = self.cfg.control_period;
        let reference = self.trajectory.sample(t)?;
        let actual = self.posture();
        let err = posture_error(&actual, &reference.posture);
        let eta_ref = clamp_velocities(
            &kanayama_control(&err, reference.v_r, reference.omega_r, &self.cfg.motion),
            &self.cfg.robot,
        );
        let eta_meas = self.measure();

        let (mut u_fb, pid) =
            velocity_feedback(&eta_ref, &eta_meas, &self.pid, &self.cfg.velocity, dt);
        self.pid = pid;
        if self.force_zero_feedback {
            u_fb = MotorCommand::ZERO;
        }

        let prev_ref = self.prev_ref.replace(eta_ref).unwrap_or(eta_ref);
        let u_max = self.cfg.robot.u_max;
        let (u_ff, u_total) = match (&mut self.net, &self.cfg.nn) {
            (Some(net), Some(nn_cfg)) => {
                let x = nn::features(&eta_ref, &prev_ref, &eta_meas, dt, &nn_cfg.feature_scales);
                let (u_ff, cache) = nn::feedforward(net, &x)?;
                let u_total = saturate(&(u_fb + u_ff), u_max);
                if !is_saturated(&u_total, u_max) {
                    nn::learn_from_feedback(
                        net,
                        &cache,
                        &u_fb,
                        nn_cfg.learning_rate,
                        nn_cfg.grad_clip,
                    )?;
                }
                (u_ff, u_total)
            }
            _ => (MotorCommand::ZERO, saturate(&u_fb, u_max)),
        };
        if !u_total.u_l.is_finite() {
            return Err(Error::NonFinite { index: 0 });
        }
        if !u_total.u_r.is_finite() {
            return Err(Error::NonFinite { index: 1 });
        }

        let record = LogRecord {
            t,
            reference: reference.posture,
            actual,
            eta_traj: VelocityState::new(reference.v_r, reference.omega_r),
            eta_ref,
            eta_meas,
            u_fb,
            u_ff,
            u_total,
            e_x: err.e_x,
            e_y: err.e_y,
            e_theta: err.e_theta,
            fb_loss: u_fb.u_l * u_fb.u_l + u_fb.u_r * u_fb.u_r,
        };
        Ok((u_total, record))
    }

    /// Integrates the true plant over one control period under a held command.
    fn advance(&mut self, u: MotorCommand, t0: f64) -> Result<()> {
        let h = self.cfg.plant_dt;
        let plant = self.plant;
        for k in 0..self.substeps {
            let t = t0 + k as f64 * h;
            let mut next = self.cfg.integrator.step(
                |_, s| plant_derivative(s, &u, &plant),
                &self.state,
                t,
                h,
            )?;
            next[2] = normalize_angle(next[2]);
            self.state = next;
            if let Some(log) = &mut self.substep_log {
                log.push(Substep {
                    t: t + h,
                    tick: self.tick,
                    u,
                    state: next,
                });
            }
        }
        Ok(())
    }

    /// Runs one control tick and the plant integration that follows it.
    pub fn step(&mut self) -> Result<LogRecord> {
        if self.is_finished() {
            return Err(Error::Usage("simulation already finished".into()));
        }
        let t = self.tick as f64 * self.cfg.control_period;
        let (u, record) = self.control_step(t)?;
        self.advance(u, t)?;
        self.tick += 1;
        Ok(record)
    }

    /// Runs to the end. On failure the records produced so far are returned
    /// inside the error.
    pub fn run(&mut self) -> std::result::Result<Vec<LogRecord>, RunError> {
        let mut log = Vec::with_capacity(self.ticks.saturating_sub(self.tick));
        while !self.is_finished() {
            match self.step() {
                Ok(r) => log.push(r),
                Err(source) => {
                    return Err(RunError::Aborted {
                        tick: self.tick,
                        source,
                        log,
                    })
                }
            }
        }
        Ok(log)
    }
}

/// Validates `cfg` and runs it to completion.
pub fn run_simulation(cfg: &SimConfig) -> std::result::Result<Vec<LogRecord>, RunError> {
    let mut sim = Simulation::new(cfg.clone()).map_err(RunError::Config)?;
    sim.run()
}
