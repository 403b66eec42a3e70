//! Command implementations behind the `wmr-sim` binary.
//!
//! Exit codes: 0 on success, 1 for usage, configuration and I/O problems,
//! 2 when a run fails numerically part-way through.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::config::{ConfigError, ExperimentFile, SWEEPABLE};
use crate::csvlog::write_log;
use crate::metrics::{compare_runs, compute_metrics, Comparison, Metrics};
use crate::sim::{LogRecord, RunError, SimConfig, Simulation};

pub const PID_LABEL: &str = "pid";
pub const NN_LABEL: &str = "pid+nn";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numeric(_) => 2,
            _ => 1,
        }
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub quiet: bool,
    /// Where to write the trained network after a run with the network enabled.
    pub save_weights: Option<PathBuf>,
}

fn load(config: &Path, seed: Option<u64>) -> Result<(ExperimentFile, PathBuf), CliError> {
    let mut exp = ExperimentFile::load(config)?;
    if let Some(s) = seed {
        exp.override_seed(s);
    }
    let base = config
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    Ok((exp, base))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn write_csv(path: &Path, log: &[LogRecord]) -> Result<(), CliError> {
    let file = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    write_log(std::io::BufWriter::new(file), log).map_err(|e| CliError::io(path, e))
}

/// Runs to completion. If the run aborts, the partial log is still written
/// to `partial_out` before the error is returned.
fn execute(
    cfg: SimConfig,
    partial_out: Option<&Path>,
) -> Result<(Vec<LogRecord>, Simulation), CliError> {
    let mut sim = Simulation::new(cfg).map_err(|e| CliError::Config(e.into()))?;
    match sim.run() {
        Ok(log) => Ok((log, sim)),
        Err(RunError::Aborted { tick, source, log }) => {
            if let Some(path) = partial_out {
                write_csv(path, &log)?;
            }
            Err(CliError::Numeric(format!(
                "run aborted at tick {tick}: {source}"
            )))
        }
        Err(RunError::Config(e)) => Err(CliError::Config(e.into())),
    }
}

pub fn cmd_run(
    config: &Path,
    output: &Path,
    opts: &RunOptions,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let (exp, base) = load(config, opts.seed)?;
    let cfg = exp.to_sim_config(None, &base)?;
    let (log, sim) = execute(cfg, Some(output))?;
    write_csv(output, &log)?;
    if let (Some(path), Some(net)) = (&opts.save_weights, sim.network()) {
        write_file(path, &net.to_text())?;
    }
    if !opts.quiet {
        let _ = writeln!(out, "records: {}", log.len());
        match compute_metrics(&log) {
            Ok(m) => {
                let _ = write!(out, "{}", m.summary());
            }
            Err(_) => {
                let _ = writeln!(out, "no records; metrics not computed");
            }
        }
    }
    Ok(())
}

/// Output of a PID versus PID+NN pair of runs.
pub struct PairResult {
    pub pid: Vec<LogRecord>,
    pub nn: Vec<LogRecord>,
    pub comparison: Comparison,
}

fn pair_configs(exp: &ExperimentFile, base: &Path) -> Result<(SimConfig, SimConfig), CliError> {
    Ok((
        exp.to_sim_config(Some(false), base)?,
        exp.to_sim_config(Some(true), base)?,
    ))
}

fn run_pair(pid_cfg: SimConfig, nn_cfg: SimConfig) -> Result<PairResult, CliError> {
    let (pid, nn) = rayon::join(|| execute(pid_cfg, None), || execute(nn_cfg, None));
    let (pid, _) = pid?;
    let (nn, _) = nn?;
    let comparison = compare_runs(&pid, &nn, PID_LABEL, NN_LABEL)
        .map_err(|e| CliError::Usage(format!("cannot compare runs: {e}")))?;
    Ok(PairResult {
        pid,
        nn,
        comparison,
    })
}

/// Runs the scenario twice, without and with the network, and compares.
pub fn compare_experiment(exp: &ExperimentFile, base: &Path) -> Result<PairResult, CliError> {
    let (a, b) = pair_configs(exp, base)?;
    run_pair(a, b)
}

pub fn cmd_compare(
    config: &Path,
    output_dir: &Path,
    opts: &RunOptions,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let (exp, base) = load(config, opts.seed)?;
    let (a, b) = pair_configs(&exp, &base)?;
    fs::create_dir_all(output_dir).map_err(|e| CliError::io(output_dir, e))?;
    let probe = output_dir.join(".write-test");
    fs::write(&probe, b"").map_err(|e| CliError::io(output_dir, e))?;
    let _ = fs::remove_file(&probe);

    let res = run_pair(a, b)?;
    write_csv(&output_dir.join("pid.csv"), &res.pid)?;
    write_csv(&output_dir.join("pid_nn.csv"), &res.nn)?;
    write_file(&output_dir.join("comparison.csv"), &res.comparison.to_csv())?;
    let text = res.comparison.to_text();
    write_file(&output_dir.join("comparison.txt"), &text)?;
    if !opts.quiet {
        let _ = write!(out, "{text}");
    }
    Ok(())
}

pub fn sweep_header() -> String {
    let mut cols = vec!["value".to_string()];
    for prefix in ["pid_", "nn_", "ratio_"] {
        cols.extend(Metrics::NAMES.iter().map(|n| format!("{prefix}{n}")));
    }
    cols.join(",")
}

pub fn parse_values(text: &str) -> Result<Vec<f64>, CliError> {
    let values: Result<Vec<f64>, _> = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| CliError::Usage(format!("bad sweep value `{s}`")))
        })
        .collect();
    let values = values?;
    if values.is_empty() {
        return Err(CliError::Usage("no sweep values given".into()));
    }
    Ok(values)
}

pub fn cmd_sweep(
    config: &Path,
    parameter: &str,
    values: &[f64],
    output_dir: &Path,
    parallel: usize,
    opts: &RunOptions,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    if !SWEEPABLE.contains(&parameter) {
        return Err(CliError::Usage(format!(
            "`{parameter}` is not sweepable; choose one of: {}",
            SWEEPABLE.join(", ")
        )));
    }
    if values.is_empty() {
        return Err(CliError::Usage("no sweep values given".into()));
    }
    let (exp, base) = load(config, opts.seed)?;
    // Validate every point before any simulation starts.
    let mut jobs = Vec::with_capacity(values.len());
    for &v in values {
        let mut e = exp.clone();
        e.set_sweepable(parameter, v)?;
        jobs.push((v, pair_configs(&e, &base)?));
    }
    fs::create_dir_all(output_dir).map_err(|e| CliError::io(output_dir, e))?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallel.max(1))
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))?;
    let results: Vec<Result<(f64, Comparison), CliError>> = pool.install(|| {
        jobs.into_par_iter()
            .map(|(v, (a, b))| run_pair(a, b).map(|r| (v, r.comparison)))
            .collect()
    });

    let mut csv = format!("{}\n", sweep_header());
    let mut table = format!(
        "{parameter:>14} {:>14} {:>14} {:>8}\n",
        "pid v_rms_fin", "nn v_rms_fin", "ratio"
    );
    for r in results {
        let (v, c) = r?;
        let mut fields = vec![format!("{v:?}")];
        fields.extend(c.a.values().iter().map(|x| format!("{x:?}")));
        fields.extend(c.b.values().iter().map(|x| format!("{x:?}")));
        fields.extend(c.rows.iter().map(|row| format!("{:?}", row.ratio)));
        csv.push_str(&fields.join(","));
        csv.push('\n');
        table.push_str(&format!(
            "{v:>14} {:>14.6e} {:>14.6e} {:>8.4}\n",
            c.a.v_rms_final,
            c.b.v_rms_final,
            c.b.v_rms_final / c.a.v_rms_final
        ));
    }
    write_file(&output_dir.join("sweep.csv"), &csv)?;
    if !opts.quiet {
        let _ = write!(out, "{table}");
    }
    Ok(())
}

pub fn cmd_echo_config(
    config: &Path,
    seed: Option<u64>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let (exp, base) = load(config, seed)?;
    exp.to_sim_config(None, &base)?;
    let _ = write!(out, "{}", exp.to_toml());
    Ok(())
}
