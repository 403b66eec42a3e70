//! Experiment files.
//!
//! An experiment is a TOML document with the sections `[robot]`,
//! `[uncertainty]`, `[trajectory]`, `[motion_controller]`,
//! `[velocity_controller]` (with `.v` and `.omega` sub-tables), `[nn]` and
//! `[sim]`. Every key is optional and falls back to its default; unknown
//! keys are rejected.

use std::f64::consts::FRAC_PI_2;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::controllers::{KanayamaGains, PidGains};
use crate::error::Error;
use crate::integrator::Method;
use crate::nn::{FeatureScales, Mlp, FEATURE_DIM};
use crate::sim::{NnConfig, SimConfig};
use crate::trajectory::TrajectoryKind;
use crate::vehicle::{Posture, RobotParams, UncertaintySpec, VelocityState};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid value for `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("{0}")]
    Other(String),
}

impl From<Error> for ConfigError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter { name, reason } => ConfigError::Invalid {
                field: name,
                reason,
            },
            other => ConfigError::Other(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NnSection {
    pub enabled: bool,
    pub hidden: usize,
    pub learning_rate: f64,
    /// Gradient-norm bound; `0` disables clipping.
    pub grad_clip: f64,
    pub init_scale: f64,
    /// Required whenever the network is used.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Defaults to `(v_max, omega_max, 10 v_max, 10 omega_max, v_max, omega_max)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub feature_scales: Option<[f64; FEATURE_DIM]>,
    /// Text weights record to start from instead of a random network.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights_file: Option<String>,
}

impl Default for NnSection {
    fn default() -> Self {
        Self {
            enabled: false,
            hidden: 8,
            learning_rate: 1e-3,
            grad_clip: 10.0,
            init_scale: 0.1,
            seed: None,
            feature_scales: None,
            weights_file: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub duration: f64,
    pub plant_dt: f64,
    pub control_period: f64,
    pub integrator: Method,
    pub noise_v_std: f64,
    pub noise_omega_std: f64,
    pub seed: u64,
    /// `[x, y, theta]`; defaults to the reference start.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial: Option<[f64; 3]>,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            duration: 60.0,
            plant_dt: 1e-3,
            control_period: 1e-2,
            integrator: Method::Rk4,
            noise_v_std: 0.0,
            noise_omega_std: 0.0,
            seed: 0,
            initial: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentFile {
    pub robot: RobotParams,
    pub uncertainty: UncertaintySpec,
    pub trajectory: TrajectoryKind,
    pub motion_controller: KanayamaGains,
    pub velocity_controller: PidGains,
    pub nn: NnSection,
    pub sim: SimSection,
}

impl Default for ExperimentFile {
    fn default() -> Self {
        Self {
            robot: RobotParams::default(),
            uncertainty: UncertaintySpec::default(),
            trajectory: TrajectoryKind::Circle {
                center_x: 0.0,
                center_y: 2.0,
                radius: 2.0,
                speed: 0.5,
                phase: -FRAC_PI_2,
                clockwise: false,
            },
            motion_controller: KanayamaGains::default(),
            velocity_controller: PidGains::default(),
            nn: NnSection::default(),
            sim: SimSection::default(),
        }
    }
}

/// Fields accepted by the sweep command.
pub const SWEEPABLE: [&str; 13] = [
    "uncertainty.mass_factor",
    "uncertainty.radius_factor",
    "uncertainty.inertia_factor",
    "nn.learning_rate",
    "motion_controller.k_x",
    "motion_controller.k_y",
    "motion_controller.k_theta",
    "velocity_controller.v.k_p",
    "velocity_controller.v.k_i",
    "velocity_controller.v.k_d",
    "velocity_controller.omega.k_p",
    "velocity_controller.omega.k_i",
    "velocity_controller.omega.k_d",
];

impl ExperimentFile {
    pub fn parse(text: &str, origin: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_string(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Fully resolved document, every default spelled out.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("experiment files always serialize")
    }

    /// Overrides both the noise seed and the network initialization seed.
    pub fn override_seed(&mut self, seed: u64) {
        self.sim.seed = seed;
        self.nn.seed = Some(seed);
    }

    pub fn set_sweepable(&mut self, field: &str, value: f64) -> Result<(), ConfigError> {
        let slot = match field {
            "uncertainty.mass_factor" => &mut self.uncertainty.mass_factor,
            "uncertainty.radius_factor" => &mut self.uncertainty.radius_factor,
            "uncertainty.inertia_factor" => &mut self.uncertainty.inertia_factor,
            "nn.learning_rate" => &mut self.nn.learning_rate,
            "motion_controller.k_x" => &mut self.motion_controller.k_x,
            "motion_controller.k_y" => &mut self.motion_controller.k_y,
            "motion_controller.k_theta" => &mut self.motion_controller.k_theta,
            "velocity_controller.v.k_p" => &mut self.velocity_controller.v.k_p,
            "velocity_controller.v.k_i" => &mut self.velocity_controller.v.k_i,
            "velocity_controller.v.k_d" => &mut self.velocity_controller.v.k_d,
            "velocity_controller.omega.k_p" => &mut self.velocity_controller.omega.k_p,
            "velocity_controller.omega.k_i" => &mut self.velocity_controller.omega.k_i,
            "velocity_controller.omega.k_d" => &mut self.velocity_controller.omega.k_d,
            _ => {
                return Err(ConfigError::Other(format!(
                    "`{field}` is not sweepable; choose one of: {}",
                    SWEEPABLE.join(", ")
                )))
            }
        };
        *slot = value;
        Ok(())
    }

    /// Builds and validates the simulation config. `nn_enabled` overrides
    /// the `[nn] enabled` switch; `base_dir` resolves a relative weights path.
    pub fn to_sim_config(
        &self,
        nn_enabled: Option<bool>,
        base_dir: &Path,
    ) -> Result<SimConfig, ConfigError> {
        let enabled = nn_enabled.unwrap_or(self.nn.enabled);
        let nn =
            if enabled {
                let seed = self.nn.seed.ok_or_else(|| ConfigError::Invalid {
                    field: "nn.seed".into(),
                    reason: "a seed is required when the network is used".into(),
                })?;
                let initial_weights = match &self.nn.weights_file {
                    Some(p) => {
                        let path = base_dir.join(p);
                        let text =
                            std::fs::read_to_string(&path).map_err(|source| ConfigError::Read {
                                path: path.clone(),
                                source,
                            })?;
                        Some(Mlp::from_text(&text).map_err(|e| ConfigError::Invalid {
                            field: "nn.weights_file".into(),
                            reason: e.to_string(),
                        })?)
                    }
                    None => None,
                };
                if self.nn.grad_clip < 0.0 || !self.nn.grad_clip.is_finite() {
                    return Err(ConfigError::Invalid {
                        field: "nn.grad_clip".into(),
                        reason: "must be >= 0".into(),
                    });
                }
                Some(NnConfig {
                    hidden: self.nn.hidden,
                    learning_rate: self.nn.learning_rate,
                    grad_clip: (self.nn.grad_clip > 0.0).then_some(self.nn.grad_clip),
                    init_scale: self.nn.init_scale,
                    seed,
                    feature_scales: self.nn.feature_scales.map(FeatureScales).unwrap_or_else(
                        || FeatureScales::from_limits(self.robot.v_max, self.robot.omega_max),
                    ),
                    initial_weights,
                })
            } else {
                None
            };
        let cfg = SimConfig {
            robot: self.robot,
            uncertainty: self.uncertainty,
            trajectory: self.trajectory.clone(),
            motion: self.motion_controller,
            velocity: self.velocity_controller,
            nn,
            plant_dt: self.sim.plant_dt,
            control_period: self.sim.control_period,
            duration: self.sim.duration,
            integrator: self.sim.integrator,
            noise_std: VelocityState::new(self.sim.noise_v_std, self.sim.noise_omega_std),
            seed: self.sim.seed,
            initial_posture: self.sim.initial.map(|[x, y, th]| Posture::new(x, y, th)),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
