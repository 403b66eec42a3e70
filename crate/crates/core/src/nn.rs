//! One-hidden-layer perceptron used as the adaptive feed-forward term.
//!
//! The network maps normalized velocity-level signals to a pair of motor
//! voltages. It is trained online by feedback-error learning: after each
//! forward pass the feedback controller's command `U_fb` is taken as the
//! output error, so every update moves `U_ff` in the direction that
//! absorbs the effort the feedback loop is currently supplying.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vehicle::{MotorCommand, VelocityState};

const WEIGHTS_MAGIC: &str = "wmr-mlp";
const WEIGHTS_VERSION: u32 = 1;

/// Fully connected `n_in -> n_hidden (tanh) -> n_out (linear)` network.
///
/// Weight matrices are stored row-major, one row per destination unit.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    n_in: usize,
    n_hidden: usize,
    n_out: usize,
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
    /// Bumped on every parameter change so stale caches can be detected.
    generation: u64,
}

/// Activations recorded by [`Mlp::forward`] for the matching backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Vec<f64>,
    hidden: Vec<f64>,
    generation: u64,
}

/// Parameter gradients, laid out like the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl Gradients {
    fn iter(&self) -> impl Iterator<Item = &f64> {
        self.w1
            .iter()
            .chain(self.b1.iter())
            .chain(self.w2.iter())
            .chain(self.b2.iter())
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.iter().copied().collect()
    }

    pub fn norm(&self) -> f64 {
        self.iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

impl Mlp {
    /// Uniform initialization in `[-init_scale, init_scale]` from a seeded
    /// generator; biases start at zero.
    pub fn new(
        n_in: usize,
        n_hidden: usize,
        n_out: usize,
        seed: u64,
        init_scale: f64,
    ) -> Result<Self> {
        for (name, n) in [("n_in", n_in), ("n_hidden", n_hidden), ("n_out", n_out)] {
            if n == 0 {
                return Err(Error::param(name, "layer size must be >= 1"));
            }
        }
        if !(init_scale >= 0.0 && init_scale.is_finite()) {
            return Err(Error::param(
                "init_scale",
                format!("must be >= 0, got {init_scale}"),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |n: usize| -> Vec<f64> {
            (0..n)
                .map(|_| {
                    if init_scale == 0.0 {
                        0.0
                    } else {
                        rng.random_range(-init_scale..=init_scale)
                    }
                })
                .collect()
        };
        let w1 = draw(n_hidden * n_in);
        let w2 = draw(n_out * n_hidden);
        Ok(Self {
            n_in,
            n_hidden,
            n_out,
            w1,
            b1: vec![0.0; n_hidden],
            w2,
            b2: vec![0.0; n_out],
            generation: 0,
        })
    }

    /// Builds a network from explicit parameters (row-major weights).
    pub fn from_parts(
        n_in: usize,
        n_hidden: usize,
        n_out: usize,
        w1: Vec<f64>,
        b1: Vec<f64>,
        w2: Vec<f64>,
        b2: Vec<f64>,
    ) -> Result<Self> {
        let mut net = Self::new(n_in, n_hidden, n_out, 0, 0.0)?;
        for (got, expected) in [
            (w1.len(), n_hidden * n_in),
            (b1.len(), n_hidden),
            (w2.len(), n_out * n_hidden),
            (b2.len(), n_out),
        ] {
            if got != expected {
                return Err(Error::Shape { expected, got });
            }
        }
        net.w1 = w1;
        net.b1 = b1;
        net.w2 = w2;
        net.b2 = b2;
        if let Some(index) = net.parameters().iter().position(|w| !w.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(net)
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_hidden(&self) -> usize {
        self.n_hidden
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    pub fn num_parameters(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    /// All parameters flattened as `w1, b1, w2, b2`.
    pub fn parameters(&self) -> Vec<f64> {
        self.w1
            .iter()
            .chain(&self.b1)
            .chain(&self.w2)
            .chain(&self.b2)
            .copied()
            .collect()
    }

    /// Overwrites all parameters from a flat `w1, b1, w2, b2` slice.
    pub fn set_parameters(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_parameters() {
            return Err(Error::Shape {
                expected: self.num_parameters(),
                got: flat.len(),
            });
        }
        let mut it = flat.iter().copied();
        for slot in self
            .w1
            .iter_mut()
            .chain(self.b1.iter_mut())
            .chain(self.w2.iter_mut())
            .chain(self.b2.iter_mut())
        {
            *slot = it.next().unwrap_or_default();
        }
        self.generation += 1;
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        if x.len() != self.n_in {
            return Err(Error::Shape {
                expected: self.n_in,
                got: x.len(),
            });
        }
        let hidden: Vec<f64> = self
            .w1
            .chunks_exact(self.n_in)
            .zip(&self.b1)
            .map(|(row, b)| (dot(row, x) + b).tanh())
            .collect();
        let out: Vec<f64> = self
            .w2
            .chunks_exact(self.n_hidden)
            .zip(&self.b2)
            .map(|(row, b)| dot(row, &hidden) + b)
            .collect();
        Ok((
            out,
            ForwardCache {
                input: x.to_vec(),
                hidden,
                generation: self.generation,
            },
        ))
    }

    /// Gradients of `0.5 * |output_error|^2` where `output_error = y - target`.
    pub fn backward(&self, cache: &ForwardCache, output_error: &[f64]) -> Result<Gradients> {
        if cache.generation != self.generation
            || cache.input.len() != self.n_in
            || cache.hidden.len() != self.n_hidden
        {
            return Err(Error::Usage(
                "forward cache does not belong to the current network parameters".into(),
            ));
        }
        if output_error.len() != self.n_out {
            return Err(Error::Shape {
                expected: self.n_out,
                got: output_error.len(),
            });
        }
        let h = &cache.hidden;
        let mut w2 = Vec::with_capacity(self.w2.len());
        for e in output_error {
            w2.extend(h.iter().map(|hj| e * hj));
        }
        let b2 = output_error.to_vec();

        let mut delta = vec![0.0; self.n_hidden];
        for (row, e) in self.w2.chunks_exact(self.n_hidden).zip(output_error) {
            for (d, w) in delta.iter_mut().zip(row) {
                *d += w * e;
            }
        }
        for (d, hj) in delta.iter_mut().zip(h) {
            *d *= 1.0 - hj * hj;
        }
        let mut w1 = Vec::with_capacity(self.w1.len());
        for d in &delta {
            w1.extend(cache.input.iter().map(|xi| d * xi));
        }
        Ok(Gradients {
            w1,
            b1: delta,
            w2,
            b2,
        })
    }

    /// Gradient-descent step `w <- w - lr * g`, with `g` rescaled to norm
    /// `clip` when it is longer. A non-finite gradient is rejected and the
    /// network is left untouched.
    pub fn apply(&mut self, grads: &Gradients, lr: f64, clip: Option<f64>) -> Result<()> {
        if !(lr >= 0.0 && lr.is_finite()) {
            return Err(Error::param(
                "learning_rate",
                format!("must be >= 0, got {lr}"),
            ));
        }
        for (got, expected) in [
            (grads.w1.len(), self.w1.len()),
            (grads.b1.len(), self.b1.len()),
            (grads.w2.len(), self.w2.len()),
            (grads.b2.len(), self.b2.len()),
        ] {
            if got != expected {
                return Err(Error::Shape { expected, got });
            }
        }
        if let Some(index) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        let mut scale = lr;
        if let Some(c) = clip {
            let n = grads.norm();
            if n > c {
                scale *= c / n;
            }
        }
        if scale == 0.0 || grads.iter().all(|g| *g == 0.0) {
            return Ok(());
        }
        for (w, g) in self.w1.iter_mut().zip(&grads.w1) {
            *w -= scale * g;
        }
        for (w, g) in self.b1.iter_mut().zip(&grads.b1) {
            *w -= scale * g;
        }
        for (w, g) in self.w2.iter_mut().zip(&grads.w2) {
            *w -= scale * g;
        }
        for (w, g) in self.b2.iter_mut().zip(&grads.b2) {
            *w -= scale * g;
        }
        self.generation += 1;
        Ok(())
    }

    /// Versioned text record: magic/version line, layer sizes, then one line
    /// each for `w1`, `b1`, `w2`, `b2` (row-major).
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "{WEIGHTS_MAGIC} v{WEIGHTS_VERSION}\n{} {} {}\n",
            self.n_in, self.n_hidden, self.n_out
        );
        for block in [&self.w1, &self.b1, &self.w2, &self.b2] {
            let line: Vec<String> = block.iter().map(|w| format!("{w:?}")).collect();
            let _ = writeln!(s, "{}", line.join(" "));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        let expected_header = format!("{WEIGHTS_MAGIC} v{WEIGHTS_VERSION}");
        if header.trim() != expected_header {
            return Err(Error::Usage(format!(
                "weights file header `{header}` is not `{expected_header}`"
            )));
        }
        let sizes = parse_row::<usize>(lines.next(), "layer sizes")?;
        if sizes.len() != 3 {
            return Err(Error::Shape {
                expected: 3,
                got: sizes.len(),
            });
        }
        let w1 = parse_row::<f64>(lines.next(), "w1")?;
        let b1 = parse_row::<f64>(lines.next(), "b1")?;
        let w2 = parse_row::<f64>(lines.next(), "w2")?;
        let b2 = parse_row::<f64>(lines.next(), "b2")?;
        Self::from_parts(sizes[0], sizes[1], sizes[2], w1, b1, w2, b2)
    }
}

fn parse_row<T: std::str::FromStr>(line: Option<&str>, what: &str) -> Result<Vec<T>> {
    let line =
        line.ok_or_else(|| Error::Usage(format!("weights file is missing the {what} line")))?;
    line.split_whitespace()
        .map(|tok| {
            tok.parse::<T>()
                .map_err(|_| Error::Usage(format!("bad number `{tok}` in {what}")))
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Number of inputs of the feed-forward controller.
pub const FEATURE_DIM: usize = 6;

/// Divisors applied to `[v_ref, omega_ref, dv_ref/dt, domega_ref/dt, v, omega]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureScales(pub [f64; FEATURE_DIM]);

impl FeatureScales {
    pub fn from_limits(v_max: f64, omega_max: f64) -> Self {
        Self([
            v_max,
            omega_max,
            10.0 * v_max,
            10.0 * omega_max,
            v_max,
            omega_max,
        ])
    }

    pub fn validate(&self) -> Result<()> {
        for (i, s) in self.0.iter().enumerate() {
            if !(*s > 0.0 && s.is_finite()) {
                return Err(Error::param(
                    format!("feature_scales[{i}]"),
                    format!("must be > 0, got {s}"),
                ));
            }
        }
        Ok(())
    }
}

/// Builds the normalized feature vector. The reference derivatives are
/// backward differences over one control period.
pub fn features(
    eta_ref: &VelocityState,
    prev_ref: &VelocityState,
    eta_meas: &VelocityState,
    dt: f64,
    scales: &FeatureScales,
) -> [f64; FEATURE_DIM] {
    let raw = [
        eta_ref.v,
        eta_ref.omega,
        (eta_ref.v - prev_ref.v) / dt,
        (eta_ref.omega - prev_ref.omega) / dt,
        eta_meas.v,
        eta_meas.omega,
    ];
    let mut out = [0.0; FEATURE_DIM];
    for ((o, r), s) in out.iter_mut().zip(raw).zip(scales.0) {
        *o = r / s;
    }
    out
}

fn as_command(y: &[f64]) -> Result<MotorCommand> {
    match y {
        [l, r] => Ok(MotorCommand::new(*l, *r)),
        _ => Err(Error::Shape {
            expected: 2,
            got: y.len(),
        }),
    }
}

/// Feed-forward voltages for `x`, plus the cache needed to learn from them.
pub fn feedforward(net: &Mlp, x: &[f64]) -> Result<(MotorCommand, ForwardCache)> {
    let (y, cache) = net.forward(x)?;
    Ok((as_command(&y)?, cache))
}

/// Learning half of a feedback-error step: uses `-U_fb` as the output
/// error. A zero teaching signal leaves the network bit-identical.
pub fn learn_from_feedback(
    net: &mut Mlp,
    cache: &ForwardCache,
    u_fb: &MotorCommand,
    lr: f64,
    clip: Option<f64>,
) -> Result<()> {
    if lr == 0.0 || (u_fb.u_l == 0.0 && u_fb.u_r == 0.0) {
        return Ok(());
    }
    let grads = net.backward(cache, &[-u_fb.u_l, -u_fb.u_r])?;
    net.apply(&grads, lr, clip)
}

/// Inference followed by one feedback-error learning update. Returns the
/// feed-forward command computed before the update.
pub fn feedback_error_learn_step(
    net: &mut Mlp,
    x: &[f64],
    u_fb: &MotorCommand,
    lr: f64,
    clip: Option<f64>,
) -> Result<MotorCommand> {
    let (u_ff, cache) = feedforward(net, x)?;
    learn_from_feedback(net, &cache, u_fb, lr, clip)?;
    Ok(u_ff)
}
