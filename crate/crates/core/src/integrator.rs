//! Fixed-step explicit integrators.
//!
//! States are fixed-size arrays, so the dimension of a model is part of its
//! type and cannot drift during a run. Both steppers reject a step whose
//! derivative evaluation produced a non-finite component and report the
//! offending index.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A state vector of fixed dimension `N`.
pub type StateVector<const N: usize> = [f64; N];

/// Integration scheme selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Euler,
    #[default]
    Rk4,
}

impl Method {
    pub fn step<const N: usize, F>(
        self,
        f: F,
        s: &StateVector<N>,
        t: f64,
        dt: f64,
    ) -> Result<StateVector<N>>
    where
        F: FnMut(f64, &StateVector<N>) -> StateVector<N>,
    {
        match self {
            Method::Euler => euler_step(f, s, t, dt),
            Method::Rk4 => rk4_step(f, s, t, dt),
        }
    }
}

fn check_dt(dt: f64) -> Result<()> {
    if dt > 0.0 && dt.is_finite() {
        Ok(())
    } else {
        Err(Error::param(
            "dt",
            format!("step must be positive and finite, got {dt}"),
        ))
    }
}

fn check_finite<const N: usize>(v: &StateVector<N>) -> Result<()> {
    match v.iter().position(|c| !c.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}

/// One forward Euler step: `s + dt * f(t, s)`.
pub fn euler_step<const N: usize, F>(
    mut f: F,
    s: &StateVector<N>,
    t: f64,
    dt: f64,
) -> Result<StateVector<N>>
where
    F: FnMut(f64, &StateVector<N>) -> StateVector<N>,
{
    check_dt(dt)?;
    let k = f(t, s);
    check_finite(&k)?;
    let mut out = *s;
    for (o, d) in out.iter_mut().zip(k.iter()) {
        *o += dt * d;
    }
    check_finite(&out)?;
    Ok(out)
}

/// One classical fourth-order Runge-Kutta step.
pub fn rk4_step<const N: usize, F>(
    mut f: F,
    s: &StateVector<N>,
    t: f64,
    dt: f64,
) -> Result<StateVector<N>>
where
    F: FnMut(f64, &StateVector<N>) -> StateVector<N>,
{
    check_dt(dt)?;
    let half = 0.5 * dt;

    let k1 = f(t, s);
    check_finite(&k1)?;
    let k2 = f(t + half, &axpy(s, half, &k1));
    check_finite(&k2)?;
    let k3 = f(t + half, &axpy(s, half, &k2));
    check_finite(&k3)?;
    let k4 = f(t + dt, &axpy(s, dt, &k3));
    check_finite(&k4)?;

    let mut out = *s;
    for i in 0..N {
        out[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    check_finite(&out)?;
    Ok(out)
}

fn axpy<const N: usize>(s: &StateVector<N>, a: f64, k: &StateVector<N>) -> StateVector<N> {
    let mut out = *s;
    for (o, d) in out.iter_mut().zip(k.iter()) {
        *o += a * d;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decay(_t: f64, s: &[f64; 1]) -> [f64; 1] {
        [-s[0]]
    }

    #[test]
    fn constant_state_is_fixed() {
        let s = [1.5, -2.0, 3.0];
        let zero = |_t: f64, _s: &[f64; 3]| [0.0; 3];
        assert_eq!(euler_step(zero, &s, 0.0, 0.1).unwrap(), s);
        assert_eq!(rk4_step(zero, &s, 0.0, 0.1).unwrap(), s);
    }

    #[test]
    fn euler_single_steps() {
        let out = euler_step(decay, &[1.0], 0.0, 0.1).unwrap();
        assert!((out[0] - 0.9).abs() < 1e-15);
        let out = euler_step(|_, _: &[f64; 1]| [1.0], &[0.0], 0.0, 0.05).unwrap();
        assert!((out[0] - 0.05).abs() < 1e-15);
    }

    #[test]
    fn rk4_matches_exponential() {
        let out = rk4_step(decay, &[1.0], 0.0, 0.1).unwrap();
        let exact = (-0.1f64).exp();
        assert!((out[0] - 0.9048375).abs() < 1e-12);
        assert!((out[0] - exact).abs() < 1e-7);
    }

    #[test]
    fn rk4_exact_on_constant_rate() {
        let out = rk4_step(|_, _: &[f64; 1]| [1.0], &[2.0], 0.0, 0.25).unwrap();
        assert_eq!(out[0], 2.25);
    }

    #[test]
    fn rejects_bad_step() {
        assert!(matches!(
            rk4_step(decay, &[1.0], 0.0, 0.0),
            Err(Error::InvalidParameter { .. })
        ));
        assert!(euler_step(decay, &[1.0], 0.0, -1.0).is_err());
    }

    #[test]
    fn reports_non_finite_component() {
        let f = |_t: f64, _s: &[f64; 3]| [0.0, f64::NAN, 0.0];
        assert_eq!(
            euler_step(f, &[0.0; 3], 0.0, 0.1),
            Err(Error::NonFinite { index: 1 })
        );
        assert_eq!(
            rk4_step(f, &[0.0; 3], 0.0, 0.1),
            Err(Error::NonFinite { index: 1 })
        );
    }

    #[test]
    fn rk4_reduces_to_euler_for_constant_field() {
        let f = |_t: f64, _s: &[f64; 2]| [0.3, -1.25];
        let s = [0.125, 4.0];
        let a = rk4_step(f, &s, 0.0, 0.5).unwrap();
        let b = euler_step(f, &s, 0.0, 0.5).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() < 1e-15);
        }
    }
}
