//! Sojourn times: how long a state, and in particular group silence, lasts.

use crate::error::{Error, Result};
use crate::params::ModelParams;

/// Mean lifetime `1/p` of a state left with probability `p` per step.
pub fn expected_duration(p: f64) -> Result<f64> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "exit probability must lie in (0, 1], got {p}"
        )));
    }
    Ok(1.0 / p)
}

/// `(1 - alpha)^N` in log form.
fn ln_stay_silent(params: &ModelParams) -> f64 {
    params.n_agents() as f64 * (-params.alpha()).ln_1p()
}

/// Probability that somebody starts speaking out of full silence,
/// `1 - (1 - alpha)^N`. Independent of the weights: with nobody speaking
/// every agent's influence is zero.
pub fn escape_probability(params: &ModelParams) -> f64 {
    -ln_stay_silent(params).exp_m1()
}

/// `<tau> = 1 / (1 - (1 - alpha)^N)`.
pub fn expected_silence_duration(params: &ModelParams) -> f64 {
    1.0 / escape_probability(params)
}

/// `Var(tau) = (1 - alpha)^N / (1 - (1 - alpha)^N)^2`.
pub fn silence_duration_variance(params: &ModelParams) -> f64 {
    let escape = escape_probability(params);
    ln_stay_silent(params).exp() / (escape * escape)
}
