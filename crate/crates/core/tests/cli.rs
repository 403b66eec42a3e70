use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use wmr_sim::cli::{self, CliError, RunOptions};
use wmr_sim::config::ExperimentFile;
use wmr_sim::csvlog::LOG_COLUMNS;

const SHORT: &str = r#"
[uncertainty]
mass_factor = 1.5

[nn]
seed = 4

[sim]
duration = 2.0
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wmr-sim"))
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("exp.toml");
    fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_writes_one_row_per_tick() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SHORT);
    let out = dir.path().join("log.csv");
    let o = run(&["run", s(&cfg), "--output", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("# wmr-sim log v"));
    assert_eq!(lines[1].split(',').count(), LOG_COLUMNS.len());
    assert_eq!(lines.len() - 2, 200);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("v_rms_final"));
}

#[test]
fn quiet_suppresses_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SHORT);
    let out = dir.path().join("log.csv");
    let o = run(&["run", s(&cfg), "--output", s(&out), "--quiet"]);
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
}

#[test]
fn malformed_config_fails_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[robot]\nmass = \n");
    let out = dir.path().join("log.csv");
    let o = run(&["run", s(&cfg), "--output", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!out.exists());
    assert!(!o.stderr.is_empty());
}

#[test]
fn invalid_value_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[robot]\nmass = -1.0\n");
    let out = dir.path().join("log.csv");
    let o = run(&["run", s(&cfg), "--output", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("robot.mass"));
    assert!(!out.exists());
}

#[test]
fn missing_config_is_a_usage_error() {
    let o = run(&["run", "/nonexistent/exp.toml", "--output", "/tmp/never.csv"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn bad_arguments_exit_one_and_help_exits_zero() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["run"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["--version"]).status.code(), Some(0));
}

#[test]
fn seed_changes_noisy_runs_and_repeats_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{SHORT}noise_v_std = 0.01\nnoise_omega_std = 0.01\n");
    let cfg = write_config(dir.path(), &text);
    let csv = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let o = run(&[
            "run",
            s(&cfg),
            "--output",
            s(&out),
            "--seed",
            seed,
            "--quiet",
        ]);
        assert!(o.status.success());
        fs::read(out).unwrap()
    };
    let a = csv("a.csv", "1");
    let b = csv("b.csv", "1");
    let c = csv("c.csv", "2");
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn run_saves_trained_weights() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &SHORT.replace("seed = 4", "seed = 4\nenabled = true"),
    );
    let out = dir.path().join("log.csv");
    let w = dir.path().join("net.txt");
    let o = run(&[
        "run",
        s(&cfg),
        "--output",
        s(&out),
        "--save-weights",
        s(&w),
        "--quiet",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let net = wmr_sim::nn::Mlp::from_text(&fs::read_to_string(&w).unwrap()).unwrap();
    assert_eq!((net.n_in(), net.n_hidden(), net.n_out()), (6, 8, 2));

    // A config can start from the saved network.
    let text = format!(
        "{}\n",
        SHORT.replace(
            "seed = 4",
            "seed = 4\nenabled = true\nweights_file = \"net.txt\""
        )
    );
    let cfg2 = dir.path().join("warm.toml");
    fs::write(&cfg2, text).unwrap();
    let o = run(&[
        "run",
        s(&cfg2),
        "--output",
        s(&dir.path().join("warm.csv")),
        "--quiet",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn compare_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SHORT);
    let out = dir.path().join("cmp");
    let o = run(&["compare", s(&cfg), "--output", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["pid.csv", "pid_nn.csv", "comparison.csv", "comparison.txt"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let table = fs::read_to_string(out.join("comparison.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next().unwrap(), "metric,a,b,ratio_b_over_a,winner");
    assert_eq!(lines.count(), wmr_sim::metrics::Metrics::NAMES.len());
    assert!(String::from_utf8_lossy(&o.stdout).contains("v_rms_final"));
}

#[test]
fn compare_requires_network_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[sim]\nduration = 1.0\n");
    let out = dir.path().join("cmp");
    let o = run(&["compare", s(&cfg), "--output", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nn.seed"));
    let o = run(&[
        "compare",
        s(&cfg),
        "--output",
        s(&out),
        "--seed",
        "3",
        "--quiet",
    ]);
    assert!(o.status.success());
}

#[test]
fn compare_into_unwritable_location_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SHORT);
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let o = run(&["compare", s(&cfg), "--output", s(&blocker.join("sub"))]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn sweep_writes_one_row_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SHORT);
    let out = dir.path().join("sw");
    let o = run(&[
        "sweep",
        s(&cfg),
        "--param",
        "uncertainty.mass_factor",
        "--values",
        "1.0,1.25,1.5",
        "--output",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], cli::sweep_header());
    assert_eq!(lines.len(), 4);
    let firsts: Vec<f64> = lines[1..]
        .iter()
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(firsts, vec![1.0, 1.25, 1.5]);
}

#[test]
fn sweep_single_value_matches_compare() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SHORT);
    let sw = dir.path().join("sw");
    let o = run(&[
        "sweep",
        s(&cfg),
        "--param",
        "uncertainty.mass_factor",
        "--values",
        "1.5",
        "--output",
        s(&sw),
        "--quiet",
    ]);
    assert!(o.status.success());
    let row: Vec<String> = fs::read_to_string(sw.join("sweep.csv"))
        .unwrap()
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .map(str::to_string)
        .collect();

    let exp = ExperimentFile::load(&cfg).unwrap();
    let pair = cli::compare_experiment(&exp, dir.path()).unwrap();
    let mut expected = vec!["1.5".to_string()];
    expected.extend(pair.comparison.a.values().iter().map(|x| format!("{x:?}")));
    expected.extend(pair.comparison.b.values().iter().map(|x| format!("{x:?}")));
    expected.extend(
        pair.comparison
            .rows
            .iter()
            .map(|r| format!("{:?}", r.ratio)),
    );
    assert_eq!(row, expected);
}

#[test]
fn sweep_result_is_independent_of_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SHORT);
    let sweep = |threads: &str, name: &str| {
        let out = dir.path().join(name);
        let o = run(&[
            "sweep",
            s(&cfg),
            "--param",
            "velocity_controller.v.k_p",
            "--values",
            "40,80,120,160",
            "--output",
            s(&out),
            "--parallel",
            threads,
            "--quiet",
        ]);
        assert!(o.status.success());
        fs::read(out.join("sweep.csv")).unwrap()
    };
    assert_eq!(sweep("1", "one"), sweep("4", "four"));
}

#[test]
fn sweep_rejects_unknown_parameter_and_bad_values() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SHORT);
    let out = dir.path().join("sw");
    let o = run(&[
        "sweep",
        s(&cfg),
        "--param",
        "robot.colour",
        "--values",
        "1",
        "--output",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("uncertainty.mass_factor"));
    let o = run(&[
        "sweep",
        s(&cfg),
        "--param",
        "uncertainty.mass_factor",
        "--values",
        "1,x",
        "--output",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&[
        "sweep",
        s(&cfg),
        "--param",
        "uncertainty.mass_factor",
        "--values",
        "1",
        "--output",
        s(&out),
        "--parallel",
        "0",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!out.join("sweep.csv").exists());
}

#[test]
fn sweep_validates_every_point_before_running() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SHORT);
    let out = dir.path().join("sw");
    let o = run(&[
        "sweep",
        s(&cfg),
        "--param",
        "uncertainty.mass_factor",
        "--values",
        "1.0,-2.0",
        "--output",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("uncertainty.mass_factor"));
    assert!(!out.exists());
}

#[test]
fn echo_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SHORT);
    let o = run(&["echo-config", s(&cfg)]);
    assert!(o.status.success());
    let echoed = String::from_utf8(o.stdout).unwrap();
    let reparsed = ExperimentFile::parse(&echoed, "<echo>").unwrap();
    assert_eq!(reparsed, ExperimentFile::load(&cfg).unwrap());
    assert!(echoed.contains("mass_factor = 1.5"));
    assert!(echoed.contains("[velocity_controller.omega]"));
}

#[test]
fn numeric_failure_exits_two_with_partial_log() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[sim]\nduration = 2.0\n[robot]\nno_load_current = 1e308\n",
    );
    let out = dir.path().join("log.csv");
    let mut sink = Vec::new();
    let err = cli::cmd_run(&cfg, &out, &RunOptions::default(), &mut sink).unwrap_err();
    assert!(matches!(err, CliError::Numeric(_)), "{err}");
    assert_eq!(err.exit_code(), 2);
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.lines().count() >= 2);
}

#[test]
fn shipped_configs_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut n = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        let exp = ExperimentFile::load(&path).unwrap();
        exp.to_sim_config(Some(true), &dir).unwrap();
        exp.to_sim_config(Some(false), &dir).unwrap();
        n += 1;
    }
    assert!(n >= 3);
}
