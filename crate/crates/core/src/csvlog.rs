//! CSV run log.
//!
//! The first line is a schema comment, `# wmr-sim log v<N>`, followed by the
//! header row and one row per control tick. Numbers are written in Rust's
//! shortest round-trip form, so parsing a field recovers the exact `f64`.

use std::io::{self, Write};

use crate::sim::LogRecord;

pub const LOG_SCHEMA_VERSION: u32 = 1;

pub const LOG_COLUMNS: [&str; 23] = [
    "t_s",
    "x_ref_m",
    "y_ref_m",
    "theta_ref_rad",
    "x_m",
    "y_m",
    "theta_rad",
    "v_traj_mps",
    "omega_traj_radps",
    "v_ref_mps",
    "omega_ref_radps",
    "v_meas_mps",
    "omega_meas_radps",
    "u_fb_l_V",
    "u_fb_r_V",
    "u_ff_l_V",
    "u_ff_r_V",
    "u_l_V",
    "u_r_V",
    "e_x_m",
    "e_y_m",
    "e_theta_rad",
    "fb_loss_V2",
];

pub fn schema_line() -> String {
    format!("# wmr-sim log v{LOG_SCHEMA_VERSION}")
}

pub fn header_line() -> String {
    LOG_COLUMNS.join(",")
}

fn row(r: &LogRecord) -> [f64; 23] {
    [
        r.t,
        r.reference.x,
        r.reference.y,
        r.reference.theta,
        r.actual.x,
        r.actual.y,
        r.actual.theta,
        r.eta_traj.v,
        r.eta_traj.omega,
        r.eta_ref.v,
        r.eta_ref.omega,
        r.eta_meas.v,
        r.eta_meas.omega,
        r.u_fb.u_l,
        r.u_fb.u_r,
        r.u_ff.u_l,
        r.u_ff.u_r,
        r.u_total.u_l,
        r.u_total.u_r,
        r.e_x,
        r.e_y,
        r.e_theta,
        r.fb_loss,
    ]
}

pub fn write_log<W: Write>(mut w: W, log: &[LogRecord]) -> io::Result<()> {
    writeln!(w, "{}", schema_line())?;
    writeln!(w, "{}", header_line())?;
    let mut line = String::with_capacity(512);
    for r in log {
        line.clear();
        for (i, v) in row(r).iter().enumerate() {
            if i > 0 {
                line.push(',');
            }
            line.push_str(&format!("{v:?}"));
        }
        writeln!(w, "{line}")?;
    }
    w.flush()
}

pub fn log_to_string(log: &[LogRecord]) -> String {
    let mut buf = Vec::new();
    write_log(&mut buf, log).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("log is ascii")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{run_simulation, SimConfig};

    #[test]
    fn header_and_rows() {
        let cfg = SimConfig {
            duration: 0.5,
            ..SimConfig::default()
        };
        let log = run_simulation(&cfg).unwrap();
        let text = log_to_string(&log);
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "# wmr-sim log v1");
        assert_eq!(lines.next().unwrap(), header_line());
        let rows: Vec<&str> = lines.collect();
        assert_eq!(rows.len(), 50);
        for (line, rec) in rows.iter().zip(&log) {
            let fields: Vec<f64> = line.split(',').map(|f| f.parse().unwrap()).collect();
            assert_eq!(fields.len(), LOG_COLUMNS.len());
            assert_eq!(fields, row(rec).to_vec());
        }
    }
}
