//! Run metrics and side-by-side comparison of two runs.
//!
//! Windows are index slices of the log with `n` records:
//! the final half is `[n / 2, n)`, the first and last fifths are
//! `[0, k)` and `[n - k, n)` with `k = max(1, n / 5)`.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::sim::LogRecord;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Metrics {
    /// RMS and max of the position error `|(e_x, e_y)|`.
    pub pos_rms: f64,
    pub pos_max: f64,
    pub pos_rms_final: f64,
    pub pos_max_final: f64,
    /// RMS and max of `|e_theta|`.
    pub heading_rms: f64,
    pub heading_max: f64,
    pub heading_rms_final: f64,
    pub heading_max_final: f64,
    /// Velocity-tracking RMS, reference minus measured, per channel.
    pub v_rms: f64,
    pub omega_rms: f64,
    pub v_rms_final: f64,
    pub omega_rms_final: f64,
    /// Mean `|U_fb|` over the first and last fifth of the run.
    pub fb_mean_first: f64,
    pub fb_mean_last: f64,
}

impl Metrics {
    pub const NAMES: [&'static str; 14] = [
        "pos_rms",
        "pos_max",
        "pos_rms_final",
        "pos_max_final",
        "heading_rms",
        "heading_max",
        "heading_rms_final",
        "heading_max_final",
        "v_rms",
        "omega_rms",
        "v_rms_final",
        "omega_rms_final",
        "fb_mean_first",
        "fb_mean_last",
    ];

    pub fn values(&self) -> [f64; 14] {
        [
            self.pos_rms,
            self.pos_max,
            self.pos_rms_final,
            self.pos_max_final,
            self.heading_rms,
            self.heading_max,
            self.heading_rms_final,
            self.heading_max_final,
            self.v_rms,
            self.omega_rms,
            self.v_rms_final,
            self.omega_rms_final,
            self.fb_mean_first,
            self.fb_mean_last,
        ]
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        Self::NAMES
            .iter()
            .position(|n| *n == name)
            .map(|i| self.values()[i])
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        for (n, v) in Self::NAMES.iter().zip(self.values()) {
            let _ = writeln!(s, "{n:<18} {v:.6e}");
        }
        s
    }
}

fn rms(it: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = it.fold((0.0, 0usize), |(s, n), x| (s + x * x, n + 1));
    (sum / n as f64).sqrt()
}

fn max(it: impl Iterator<Item = f64>) -> f64 {
    it.fold(0.0, f64::max)
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = it.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    sum / n as f64
}

pub fn compute_metrics(log: &[LogRecord]) -> Result<Metrics> {
    if log.is_empty() {
        return Err(Error::Domain(
            "cannot compute metrics of an empty log".into(),
        ));
    }
    let n = log.len();
    let fin = &log[n / 2..];
    let k = (n / 5).max(1);

    let pos = |r: &LogRecord| r.e_x.hypot(r.e_y);
    let head = |r: &LogRecord| r.e_theta.abs();
    let ev = |r: &LogRecord| r.eta_ref.v - r.eta_meas.v;
    let ew = |r: &LogRecord| r.eta_ref.omega - r.eta_meas.omega;
    let fb = |r: &LogRecord| r.u_fb.norm();

    Ok(Metrics {
        pos_rms: rms(log.iter().map(pos)),
        pos_max: max(log.iter().map(pos)),
        pos_rms_final: rms(fin.iter().map(pos)),
        pos_max_final: max(fin.iter().map(pos)),
        heading_rms: rms(log.iter().map(head)),
        heading_max: max(log.iter().map(head)),
        heading_rms_final: rms(fin.iter().map(head)),
        heading_max_final: max(fin.iter().map(head)),
        v_rms: rms(log.iter().map(ev)),
        omega_rms: rms(log.iter().map(ew)),
        v_rms_final: rms(fin.iter().map(ev)),
        omega_rms_final: rms(fin.iter().map(ew)),
        fb_mean_first: mean(log[..k].iter().map(fb)),
        fb_mean_last: mean(log[n - k..].iter().map(fb)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Winner {
    A,
    B,
    Tie,
}

impl Winner {
    pub fn as_str(self) -> &'static str {
        match self {
            Winner::A => "a",
            Winner::B => "b",
            Winner::Tie => "tie",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub metric: &'static str,
    pub a: f64,
    pub b: f64,
    /// `b / a`; 1 when both are zero, infinite when only `a` is zero.
    pub ratio: f64,
    /// Lower is better for every metric.
    pub winner: Winner,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub label_a: String,
    pub label_b: String,
    pub a: Metrics,
    pub b: Metrics,
    pub rows: Vec<ComparisonRow>,
}

impl Comparison {
    pub fn row(&self, metric: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.metric == metric)
    }

    pub const CSV_HEADER: &'static str = "metric,a,b,ratio_b_over_a,winner";

    pub fn to_csv(&self) -> String {
        let mut s = format!("{}\n", Self::CSV_HEADER);
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{:?},{:?},{:?},{}",
                r.metric,
                r.a,
                r.b,
                r.ratio,
                r.winner.as_str()
            );
        }
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "a = {}\nb = {}\n\n{:<18} {:>14} {:>14} {:>10}  winner\n",
            self.label_a, self.label_b, "metric", "a", "b", "b/a"
        );
        for r in &self.rows {
            let w = match r.winner {
                Winner::A => self.label_a.as_str(),
                Winner::B => self.label_b.as_str(),
                Winner::Tie => "tie",
            };
            let _ = writeln!(
                s,
                "{:<18} {:>14.6e} {:>14.6e} {:>10.4}  {}",
                r.metric, r.a, r.b, r.ratio, w
            );
        }
        s
    }
}

/// Compares two runs of the same scenario (`b` relative to `a`).
pub fn compare_runs(
    log_a: &[LogRecord],
    log_b: &[LogRecord],
    label_a: &str,
    label_b: &str,
) -> Result<Comparison> {
    if log_a.len() != log_b.len() {
        return Err(Error::Usage(format!(
            "runs have different lengths ({} vs {})",
            log_a.len(),
            log_b.len()
        )));
    }
    if let Some(i) = log_a
        .iter()
        .zip(log_b)
        .position(|(x, y)| x.t != y.t || x.reference != y.reference)
    {
        return Err(Error::Usage(format!(
            "runs follow different scenarios (first mismatch at record {i})"
        )));
    }
    let a = compute_metrics(log_a)?;
    let b = compute_metrics(log_b)?;
    let rows = Metrics::NAMES
        .iter()
        .zip(a.values().into_iter().zip(b.values()))
        .map(|(name, (va, vb))| {
            let ratio = if va == vb { 1.0 } else { vb / va };
            let winner = if vb < va {
                Winner::B
            } else if va < vb {
                Winner::A
            } else {
                Winner::Tie
            };
            ComparisonRow {
                metric: name,
                a: va,
                b: vb,
                ratio,
                winner,
            }
        })
        .collect();
    Ok(Comparison {
        label_a: label_a.to_string(),
        label_b: label_b.to_string(),
        a,
        b,
        rows,
    })
}
