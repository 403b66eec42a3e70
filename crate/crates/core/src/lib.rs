//! Closed-loop simulation of a differential-drive mobile robot.
//!
//! A Kanayama posture controller produces velocity references, a PID loop
//! turns velocity errors into armature voltages, and an optional small MLP
//! adds a feed-forward voltage that is trained online from the PID output.
//! The plant couples DC motor torque with platform dynamics and kinematics.

pub mod cli;
pub mod config;
pub mod controllers;
pub mod csvlog;
pub mod error;
pub mod integrator;
pub mod metrics;
pub mod nn;
pub mod sim;
pub mod trajectory;
pub mod vehicle;

pub use config::{ConfigError, ExperimentFile};
pub use error::{Error, Result};
pub use metrics::{compare_runs, compute_metrics, Comparison, Metrics};
pub use sim::{run_simulation, LogRecord, NnConfig, RunError, SimConfig, Simulation};
pub use trajectory::{ReferencePoint, Trajectory, TrajectoryKind};
pub use vehicle::{MotorCommand, Posture, RobotParams, UncertaintySpec, VelocityState};
