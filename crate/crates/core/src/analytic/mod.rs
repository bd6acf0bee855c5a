//! Closed-form stationary distributions of the speaker count.
//!
//! Three families live here:
//!
//! * [`f_iso`]: agents ignore each other, so the count is binomial.
//! * [`f_uni`]: everybody weighs everybody equally; the stationary law is
//!   approximated by a discretized beta shape with parameters `2 alpha N` and
//!   `2 beta N`.
//! * [`f_theta`]: the Café family interpolating between the two through the
//!   self-weight `theta`, with shape parameters from [`shape_params`].
//!
//! Everything is computed in log space. Shape parameters well below one put
//! enormous weight on `n1 = 0` and `n1 = N`, and a linear-space product
//! overflows long before the distribution stops being interesting.

pub mod kernel;
pub mod silence;

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::special::{ln_beta, ln_choose, log_sum_exp};

pub use kernel::{exact_stationary, uniform_kernel, uniform_kernel_matrix, Kernel};
pub use silence::{
    escape_probability, expected_duration, expected_silence_duration, silence_duration_variance,
};

/// Probabilities must sum to one within this.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// Probability of each speaker count `0..=N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerCountDistribution {
    n_agents: usize,
    probs: Vec<f64>,
}

impl SpeakerCountDistribution {
    /// Validates nonnegativity and normalization.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Empty("distribution"));
        }
        if let Some(bad) = probs.iter().find(|p| !(**p >= 0.0) || !p.is_finite()) {
            return Err(Error::Domain(format!("invalid probability {bad}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::Domain(format!("probabilities sum to {total}")));
        }
        Ok(SpeakerCountDistribution {
            n_agents: probs.len() - 1,
            probs,
        })
    }

    /// Normalizes unnormalized log weights.
    pub fn from_ln_weights(ln_weights: &[f64]) -> Self {
        let ln_z = log_sum_exp(ln_weights);
        SpeakerCountDistribution {
            n_agents: ln_weights.len() - 1,
            probs: ln_weights.iter().map(|&l| (l - ln_z).exp()).collect(),
        }
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, n1: usize) -> f64 {
        self.probs[n1]
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(k, p)| k as f64 * p)
            .sum()
    }

    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        self.probs
            .iter()
            .enumerate()
            .map(|(k, p)| (k as f64 - mean).powi(2) * p)
            .sum()
    }

    /// Most probable count; the smallest one on ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (k, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = k;
            }
        }
        best
    }

    /// True when the mode sits at `0` or `N`.
    pub fn is_edge_peaked(&self) -> bool {
        let mode = self.argmax();
        mode == 0 || mode == self.n_agents
    }

    /// Histogram of `draws` independent samples, by inverse CDF.
    pub fn sample_counts<R: Rng + ?Sized>(&self, draws: u64, rng: &mut R) -> Vec<u64> {
        let mut cdf = Vec::with_capacity(self.probs.len());
        let mut acc = 0.0;
        for p in &self.probs {
            acc += p;
            cdf.push(acc);
        }
        let total = acc;
        let mut counts = vec![0u64; self.probs.len()];
        for _ in 0..draws {
            let u = rng.random::<f64>() * total;
            let k = cdf.partition_point(|&c| c <= u).min(self.n_agents);
            counts[k] += 1;
        }
        counts
    }

    /// CSV with header `n1,prob`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["n1", "prob"])?;
        for (k, p) in self.probs.iter().enumerate() {
            out.write_record([k.to_string(), format!("{p:e}")])?;
        }
        out.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Exponents (plus one) of the two factors in the Café distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeParams {
    pub h_alpha: f64,
    pub h_beta: f64,
}

/// Interpolation weight `theta (alpha + beta) / (1 - theta + alpha + beta)`.
///
/// Zero at `theta = 0`, one at `theta = 1`, increasing in between.
pub fn h_of_theta(alpha: f64, beta: f64, theta: f64) -> f64 {
    let s = alpha + beta;
    theta * s / (1.0 - theta + s)
}

/// Shape parameters for an explicit interpolation weight `h`.
pub fn shape_params_for_h(n_agents: usize, alpha: f64, beta: f64, h: f64) -> ShapeParams {
    let scale = 2.0 * (1.0 - h) + h / (alpha + beta);
    let n = n_agents as f64;
    ShapeParams {
        h_alpha: n * alpha * scale,
        h_beta: n * beta * scale,
    }
}

/// `h_alpha(theta)` and `h_beta(theta)`; `(2 alpha N, 2 beta N)` at `theta = 0`
/// and `(alpha N, beta N) / (alpha + beta)` at `theta = 1`.
pub fn shape_params(params: &ModelParams) -> ShapeParams {
    let h = h_of_theta(params.alpha(), params.beta(), params.theta());
    shape_params_for_h(params.n_agents(), params.alpha(), params.beta(), h)
}

/// Unnormalized log weight of every count under the given shape.
///
/// `(1 - x) alpha + x (1 - beta)` and `(1 - x)(1 - alpha) + x beta` with
/// `x = n1 / N`; both fractions are divided out separately so that swapping
/// `n1` and `N - n1` swaps the factors exactly.
pub fn ln_cafe_terms(n_agents: usize, alpha: f64, beta: f64, shape: ShapeParams) -> Vec<f64> {
    let n = n_agents as f64;
    (0..=n_agents)
        .map(|k| {
            let speaking = k as f64 / n;
            let silent = (n_agents - k) as f64 / n;
            let up = silent * alpha + speaking * (1.0 - beta);
            let down = silent * (1.0 - alpha) + speaking * beta;
            (shape.h_alpha - 1.0) * up.ln() + (shape.h_beta - 1.0) * down.ln()
        })
        .collect()
}

/// `ln Z`: log of the exact finite normalizing sum.
pub fn ln_normalization_z(params: &ModelParams, shape: ShapeParams) -> f64 {
    log_sum_exp(&ln_cafe_terms(
        params.n_agents(),
        params.alpha(),
        params.beta(),
        shape,
    ))
}

/// Exact normalizing sum `Z(h_alpha, h_beta)`; may be `inf` where only
/// [`ln_normalization_z`] is representable.
pub fn normalization_z(params: &ModelParams, shape: ShapeParams) -> f64 {
    ln_normalization_z(params, shape).exp()
}

/// Large-`N` approximation `N / (1 - alpha - beta) * B(h_alpha, h_beta)`.
pub fn z_beta_approximation(params: &ModelParams, shape: ShapeParams) -> f64 {
    let n = params.n_agents() as f64;
    n / (1.0 - params.alpha() - params.beta()) * ln_beta(shape.h_alpha, shape.h_beta).exp()
}

/// [`z_beta_approximation`] plus half of each end term (trapezoid rule).
pub fn z_trapezoid_approximation(params: &ModelParams, shape: ShapeParams) -> f64 {
    let terms = ln_cafe_terms(params.n_agents(), params.alpha(), params.beta(), shape);
    let ends = terms[0].exp() + terms[params.n_agents()].exp();
    z_beta_approximation(params, shape) + 0.5 * ends
}

/// Café distribution for arbitrary shape parameters.
pub fn cafe_distribution(
    n_agents: usize,
    alpha: f64,
    beta: f64,
    shape: ShapeParams,
) -> SpeakerCountDistribution {
    SpeakerCountDistribution::from_ln_weights(&ln_cafe_terms(n_agents, alpha, beta, shape))
}

/// The Café `theta` distribution of the speaker count.
pub fn f_theta(params: &ModelParams) -> SpeakerCountDistribution {
    cafe_distribution(
        params.n_agents(),
        params.alpha(),
        params.beta(),
        shape_params(params),
    )
}

/// Uniform-group approximation with shapes `(2 alpha N, 2 beta N)`; `theta` is ignored.
pub fn f_uni(params: &ModelParams) -> SpeakerCountDistribution {
    let n = params.n_agents() as f64;
    cafe_distribution(
        params.n_agents(),
        params.alpha(),
        params.beta(),
        ShapeParams {
            h_alpha: n * params.alpha() * 2.0,
            h_beta: n * params.beta() * 2.0,
        },
    )
}

/// Binomial law of independent agents; `theta` is ignored.
pub fn f_iso(params: &ModelParams) -> SpeakerCountDistribution {
    let n = params.n_agents();
    let s = params.alpha() + params.beta();
    let ln_up = (params.alpha() / s).ln();
    let ln_down = (params.beta() / s).ln();
    let ln_weights: Vec<f64> = (0..=n)
        .map(|k| ln_choose(n, k) + k as f64 * ln_up + (n - k) as f64 * ln_down)
        .collect();
    SpeakerCountDistribution::from_ln_weights(&ln_weights)
}

/// Expected number of speakers, `N alpha / (alpha + beta)`, whatever `theta`.
pub fn mean_speakers(params: &ModelParams) -> f64 {
    params.n_agents() as f64 * params.speaking_marginal()
}

/// `P0`, the Café probability that nobody speaks.
pub fn silence_probability(params: &ModelParams) -> f64 {
    let shape = shape_params(params);
    let terms = ln_cafe_terms(params.n_agents(), params.alpha(), params.beta(), shape);
    (terms[0] - log_sum_exp(&terms)).exp()
}

/// Self-weight at which `h_alpha` crosses one, where `f_theta` turns flat.
///
/// `None` when `h_alpha` never equals one inside `[0, 1]`, for example when
/// `2 alpha N >= 1` already at `theta = 0`.
pub fn critical_theta(n_agents: usize, alpha: f64, beta: f64) -> Option<f64> {
    let na = n_agents as f64 * alpha;
    let s = alpha + beta;
    if 2.0 * na >= 1.0 {
        return None;
    }
    let slope = na * (1.0 / s - 2.0);
    if slope <= 0.0 {
        return None;
    }
    let h = (1.0 - 2.0 * na) / slope;
    if !(0.0..=1.0).contains(&h) {
        return None;
    }
    let mut theta = (h * (1.0 + s) / (s + h)).clamp(0.0, 1.0);
    let h_alpha = |t: f64| shape_params_for_h(n_agents, alpha, beta, h_of_theta(alpha, beta, t)).h_alpha;
    if (h_alpha(theta) - 1.0).abs() > 1e-9 {
        // Polish with bisection; h_alpha is increasing in theta here.
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if h_alpha(mid) < 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        theta = 0.5 * (lo + hi);
    }
    Some(theta)
}
