//! Two-point Gaussian-smoothing oracle and the Monte Carlo estimators used
//! to check its statistical properties.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::GameSpec;

/// Smoothing values are floored here before dividing by them.
pub const MU_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    Constant,
    Diminishing,
}

/// `mu_k = mu0` or `mu_k = mu0 / (k + 1)^exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothingSchedule {
    pub kind: ScheduleKind,
    pub mu0: f64,
    #[serde(default = "default_exponent")]
    pub exponent: f64,
}

fn default_exponent() -> f64 {
    1.0
}

impl SmoothingSchedule {
    pub fn constant(mu0: f64) -> Self {
        Self {
            kind: ScheduleKind::Constant,
            mu0,
            exponent: 0.0,
        }
    }

    pub fn diminishing(mu0: f64, exponent: f64) -> Self {
        Self {
            kind: ScheduleKind::Diminishing,
            mu0,
            exponent,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu0 > 0.0 && self.mu0.is_finite()) {
            return Err(Error::InvalidParameter(format!("mu0 must be positive, got {}", self.mu0)));
        }
        if self.kind == ScheduleKind::Diminishing && !(self.exponent > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "diminishing smoothing needs a positive exponent, got {}",
                self.exponent
            )));
        }
        Ok(())
    }

    /// `(mu_k, floored)`; `floored` is set when the raw value fell below [`MU_FLOOR`].
    pub fn at(&self, k: usize) -> (f64, bool) {
        let raw = match self.kind {
            ScheduleKind::Constant => self.mu0,
            ScheduleKind::Diminishing => self.mu0 / ((k + 1) as f64).powf(self.exponent),
        };
        if raw < MU_FLOOR {
            (MU_FLOOR, true)
        } else {
            (raw, false)
        }
    }
}

/// Reproducible standard-normal draws for one player.
///
/// Each `(seed, stream)` pair addresses an independent ChaCha8 stream; draw
/// `d` always consumes words `4d..4d+4` of it, so any draw can be
/// regenerated from its index alone.
#[derive(Debug, Clone)]
pub struct RandomSource {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
    drawn: u64,
}

impl RandomSource {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self {
            seed,
            stream,
            rng,
            drawn: 0,
        }
    }

    /// One source per player, all derived from a single master seed.
    pub fn per_player(seed: u64, n: usize) -> Vec<Self> {
        (0..n as u64).map(|s| Self::new(seed, s)).collect()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Number of variates drawn so far (the index of the next one).
    pub fn draws(&self) -> u64 {
        self.drawn
    }

    pub fn next_normal(&mut self) -> f64 {
        self.drawn += 1;
        box_muller(self.rng.next_u64(), self.rng.next_u64())
    }

    /// The variate at position `index` of this stream, without advancing it.
    pub fn normal_at(&self, index: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(4 * index as u128);
        box_muller(rng.next_u64(), rng.next_u64())
    }
}

fn box_muller(a: u64, b: u64) -> f64 {
    const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
    // u1 in (0, 1], u2 in [0, 1)
    let u1 = ((a >> 11) + 1) as f64 * SCALE;
    let u2 = (b >> 11) as f64 * SCALE;
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// `[f_i(y_i + mu xi, y_-i) - f_i(y)] / mu * xi`, using exactly two cost
/// evaluations. `y` is the full point the cost is evaluated at.
pub fn gf_oracle(g: &GameSpec, i: usize, y: &[f64], mu: f64, xi: f64) -> Result<f64> {
    if !(mu > 0.0) {
        return Err(Error::DegenerateSmoothing(mu));
    }
    let base = g.eval_cost(i, y)?;
    let mut probe = y.to_vec();
    probe[i] += mu * xi;
    let shifted = g.eval_cost(i, &probe)?;
    Ok((shifted - base) / mu * xi)
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
}

/// Welford accumulator.
#[derive(Debug, Default, Clone, Copy)]
struct Running {
    count: usize,
    mean: f64,
    m2: f64,
}

impl Running {
    fn push(&mut self, v: f64) {
        self.count += 1;
        let d = v - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (v - self.mean);
    }

    fn finish(self) -> Estimate {
        let var = self.m2 / (self.count - 1) as f64;
        Estimate {
            mean: self.mean,
            stderr: (var / self.count as f64).sqrt(),
            samples: self.count,
        }
    }
}

fn monte_carlo<F>(samples: usize, rng: &mut RandomSource, mut f: F) -> Result<Estimate>
where
    F: FnMut(f64) -> Result<f64>,
{
    if samples < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 samples, got {samples}")));
    }
    let mut acc = Running::default();
    for _ in 0..samples {
        acc.push(f(rng.next_normal())?);
    }
    Ok(acc.finish())
}

/// Monte Carlo estimate of the smoothed partial `E[g]` at `x`.
pub fn estimate_smoothed_grad(
    g: &GameSpec,
    i: usize,
    x: &[f64],
    mu: f64,
    samples: usize,
    rng: &mut RandomSource,
) -> Result<Estimate> {
    monte_carlo(samples, rng, |xi| gf_oracle(g, i, x, mu, xi))
}

/// Monte Carlo estimate of `E[g^2]` at `x`.
pub fn second_moment_estimate(
    g: &GameSpec,
    i: usize,
    x: &[f64],
    mu: f64,
    samples: usize,
    rng: &mut RandomSource,
) -> Result<Estimate> {
    monte_carlo(samples, rng, |xi| gf_oracle(g, i, x, mu, xi).map(|v| v * v))
}

/// Monte Carlo estimate of the smoothed cost `E[f_i(x_i + mu xi, x_-i)]`.
pub fn smoothed_cost_estimate(
    g: &GameSpec,
    i: usize,
    x: &[f64],
    mu: f64,
    samples: usize,
    rng: &mut RandomSource,
) -> Result<Estimate> {
    let mut probe = x.to_vec();
    let base = x[i];
    monte_carlo(samples, rng, |xi| {
        probe[i] = base + mu * xi;
        g.eval_cost(i, &probe)
    })
}
