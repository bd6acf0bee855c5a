use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Complete parameterization of one model instance.
///
/// `alpha` is the per-step probability that a silent agent starts speaking,
/// `beta` the probability that a speaking agent falls silent, and `theta` the
/// weight an agent puts on its own state when the Café weights are used.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams")]
pub struct ModelParams {
    n_agents: usize,
    alpha: f64,
    beta: f64,
    theta: f64,
}

#[derive(Deserialize)]
struct RawParams {
    n_agents: usize,
    alpha: f64,
    beta: f64,
    theta: f64,
}

impl TryFrom<RawParams> for ModelParams {
    type Error = Error;

    fn try_from(raw: RawParams) -> Result<Self> {
        ModelParams::new(raw.n_agents, raw.alpha, raw.beta, raw.theta)
    }
}

impl ModelParams {
    pub fn new(n_agents: usize, alpha: f64, beta: f64, theta: f64) -> Result<Self> {
        if n_agents < 1 {
            return Err(Error::InvalidParameter("n_agents must be at least 1".into()));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in (0, 1), got {alpha}"
            )));
        }
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "beta must lie in (0, 1), got {beta}"
            )));
        }
        if !(0.0..=1.0).contains(&theta) {
            return Err(Error::InvalidParameter(format!(
                "theta must lie in [0, 1], got {theta}"
            )));
        }
        Ok(ModelParams {
            n_agents,
            alpha,
            beta,
            theta,
        })
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Same rates and size with a different self-weight.
    pub fn with_theta(&self, theta: f64) -> Result<Self> {
        ModelParams::new(self.n_agents, self.alpha, self.beta, theta)
    }

    /// Stationary probability that a single isolated agent is speaking.
    pub fn speaking_marginal(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }

    /// Burn-in used when none is given: ten times the longer expected sojourn.
    pub fn default_burn_in(&self) -> u64 {
        (10.0 * (1.0 / self.alpha).max(1.0 / self.beta)).ceil() as u64
    }
}
