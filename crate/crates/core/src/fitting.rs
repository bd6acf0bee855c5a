//! Matching observed speaker-count histograms to the Café family.
//!
//! Divergences are always `KL(empirical || model)`: minimizing it over a model
//! parameter is the same as maximizing the likelihood of the observed counts.

use std::io::Write;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::analytic::{ln_cafe_terms, shape_params_for_h, ShapeParams, SpeakerCountDistribution};
use crate::engine::Trajectory;
use crate::error::{Error, Result};
use crate::optimize::golden_section_minimize;
use crate::params::ModelParams;
use crate::special::log_sum_exp;

/// Grid resolution of the coarse `h` scan.
pub const H_GRID_POINTS: usize = 101;
/// Bracket width at which the golden-section refinement stops.
pub const H_TOLERANCE: f64 = 1e-4;

/// Histogram of observed speaker counts over `0..=N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalDistribution {
    n_agents: usize,
    counts: Vec<u64>,
    total: u64,
}

impl EmpiricalDistribution {
    pub fn from_counts(counts: Vec<u64>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::Empty("histogram has no bins"));
        }
        let total = counts.iter().sum();
        if total == 0 {
            return Err(Error::Empty("histogram has no samples"));
        }
        Ok(EmpiricalDistribution {
            n_agents: counts.len() - 1,
            counts,
            total,
        })
    }

    /// Histogram of a stream of speaker counts.
    pub fn from_values(n_agents: usize, values: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut counts = vec![0u64; n_agents + 1];
        for v in values {
            if v > n_agents {
                return Err(Error::IndexOutOfRange {
                    index: v,
                    n: n_agents + 1,
                });
            }
            counts[v] += 1;
        }
        Self::from_counts(counts)
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn frequencies(&self) -> Vec<f64> {
        let total = self.total as f64;
        self.counts.iter().map(|&c| c as f64 / total).collect()
    }

    /// Mean speaker count.
    pub fn mean(&self) -> f64 {
        let total = self.total as f64;
        self.counts
            .iter()
            .enumerate()
            .map(|(k, &c)| k as f64 * c as f64)
            .sum::<f64>()
            / total
    }

    /// Mean and population variance of the speaking fraction `n1 / N`.
    pub fn fraction_moments(&self) -> (f64, f64) {
        let n = self.n_agents as f64;
        let total = self.total as f64;
        let mean = self.mean() / n;
        let var = self
            .counts
            .iter()
            .enumerate()
            .map(|(k, &c)| c as f64 * (k as f64 / n - mean).powi(2))
            .sum::<f64>()
            / total;
        (mean, var)
    }

    /// The relative frequencies as a distribution.
    pub fn to_distribution(&self) -> SpeakerCountDistribution {
        SpeakerCountDistribution::new(self.frequencies())
            .expect("relative frequencies are normalized")
    }

    /// CSV with header `n1,count`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["n1", "count"])?;
        for (k, c) in self.counts.iter().enumerate() {
            out.write_record([k.to_string(), c.to_string()])?;
        }
        out.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Histogram of the retained steps of a trajectory.
pub fn empirical_distribution(traj: &Trajectory) -> Result<EmpiricalDistribution> {
    if traj.counts.is_empty() {
        return Err(Error::Empty("trajectory"));
    }
    EmpiricalDistribution::from_values(
        traj.params.n_agents(),
        traj.counts.iter().map(|&c| c as usize),
    )
}

fn check_bins(p: &EmpiricalDistribution, bins: usize) -> Result<()> {
    if p.counts.len() != bins {
        return Err(Error::DimensionMismatch {
            expected: p.counts.len(),
            actual: bins,
        });
    }
    Ok(())
}

/// `KL(p || q)`; bins where `p` is empty contribute nothing.
pub fn kl_divergence(p: &EmpiricalDistribution, q: &SpeakerCountDistribution) -> Result<f64> {
    check_bins(p, q.probs().len())?;
    let total = p.total as f64;
    let mut kl = 0.0;
    for (n1, (&c, &qk)) in p.counts.iter().zip(q.probs()).enumerate() {
        if c == 0 {
            continue;
        }
        if !(qk > 0.0) {
            return Err(Error::Domain(format!(
                "model assigns zero probability to observed count {n1}"
            )));
        }
        let pk = c as f64 / total;
        kl += pk * (pk / qk).ln();
    }
    Ok(kl.max(0.0))
}

/// `KL(p || q)` with `q` given by unnormalized log weights.
fn kl_ln_weights(p: &EmpiricalDistribution, ln_weights: &[f64]) -> f64 {
    let ln_z = log_sum_exp(ln_weights);
    let total = p.total as f64;
    let kl: f64 = p
        .counts
        .iter()
        .zip(ln_weights)
        .filter(|(&c, _)| c > 0)
        .map(|(&c, &lw)| {
            let pk = c as f64 / total;
            pk * (pk.ln() - (lw - ln_z))
        })
        .sum();
    kl.max(0.0)
}

/// Best interpolation weight for one parameter set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterpolationPoint {
    pub params: ModelParams,
    pub h_min: f64,
    pub kl_at_min: f64,
    /// Local minima of KL on the coarse grid; one for a well-posed fit.
    pub grid_local_minima: usize,
}

/// Number of local minima of a sampled curve, plateaus counted once.
fn count_local_minima(values: &[f64]) -> usize {
    let signs: Vec<i8> = values
        .windows(2)
        .filter_map(|w| match w[1].partial_cmp(&w[0]) {
            Some(std::cmp::Ordering::Greater) => Some(1),
            Some(std::cmp::Ordering::Less) => Some(-1),
            _ => None,
        })
        .collect();
    if signs.is_empty() {
        return 1;
    }
    let interior = signs.windows(2).filter(|w| w[0] < 0 && w[1] > 0).count();
    interior + usize::from(signs[0] > 0) + usize::from(*signs.last().unwrap() < 0)
}

/// Minimizes `KL(emp || f_h)` over `h` in `[0, 1]`, where `f_h` is the Café
/// distribution with shape parameters built from `h` directly.
///
/// A 101-point grid locates the basin and golden-section search refines it
/// to `1e-4`. `params.theta()` is carried into the result but not used.
pub fn fit_h_min(emp: &EmpiricalDistribution, params: &ModelParams) -> Result<InterpolationPoint> {
    let n = params.n_agents();
    check_bins(emp, n + 1)?;
    let (alpha, beta) = (params.alpha(), params.beta());
    let objective = |h: f64| kl_ln_weights(emp, &ln_cafe_terms(n, alpha, beta, shape_params_for_h(n, alpha, beta, h)));

    let step = 1.0 / (H_GRID_POINTS - 1) as f64;
    let grid: Vec<f64> = (0..H_GRID_POINTS).map(|k| objective(k as f64 * step)).collect();
    let mut best = 0;
    for (k, &v) in grid.iter().enumerate() {
        if v < grid[best] {
            best = k;
        }
    }
    let minima = count_local_minima(&grid);
    if minima > 1 {
        warn!(
            "KL over h has {minima} local minima for N={n}, alpha={alpha}, beta={beta}, theta={}",
            params.theta()
        );
    }

    let lo = best.saturating_sub(1) as f64 * step;
    let hi = ((best + 1).min(H_GRID_POINTS - 1)) as f64 * step;
    let (h_refined, kl_refined) = golden_section_minimize(objective, lo, hi, H_TOLERANCE);
    let grid_h = best as f64 * step;
    let (h_min, kl_at_min) = if kl_refined < grid[best] || (kl_refined == grid[best] && h_refined < grid_h) {
        (h_refined, kl_refined)
    } else {
        (grid_h, grid[best])
    };
    Ok(InterpolationPoint {
        params: *params,
        h_min: h_min.clamp(0.0, 1.0),
        kl_at_min,
        grid_local_minima: minima,
    })
}

/// Rates recovered by matching the first two moments of `n1 / N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub alpha: f64,
    pub beta: f64,
    /// Beta shape parameters matched to the sample moments.
    pub shape: ShapeParams,
}

/// Bisection steps used per coordinate when matching model moments.
const MOMENT_BISECTIONS: usize = 64;

fn check_moment_inputs(emp: &EmpiricalDistribution, n_agents: usize, h: f64) -> Result<(f64, f64)> {
    check_bins(emp, n_agents + 1)?;
    if !(0.0..1.0).contains(&h) {
        return Err(Error::InvalidParameter(format!(
            "moment fit needs 0 <= h < 1, got {h}"
        )));
    }
    let (mean, var) = emp.fraction_moments();
    if mean <= 0.0 || mean >= 1.0 {
        return Err(Error::Domain(format!(
            "mean speaking fraction {mean} leaves no room for a beta fit"
        )));
    }
    if var <= 0.0 {
        return Err(Error::Domain("histogram has zero variance".into()));
    }
    if var >= mean * (1.0 - mean) {
        return Err(Error::Domain(format!(
            "variance {var} too large for a beta law with mean {mean}"
        )));
    }
    Ok((mean, var))
}

/// Closed-form moment inversion that treats `n1 / N` as exactly beta
/// distributed.
///
/// `a + b = m (1 - m) / v - 1` and `a = m (a + b)`. Since
/// `a + b = N (2 (1 - h)(alpha + beta) + h)`, the rate sum follows directly
/// and is split in the ratio `a : b`; at `h = 0` this is `alpha = a / 2N`,
/// `beta = b / 2N`. At `h = 1` the rate sum drops out and cannot be recovered.
///
/// The Café law lives on a grid and its support is squeezed into
/// `[alpha, 1 - beta]`, so for small or edge-peaked groups this estimate is
/// biased low; [`fit_moments`] corrects for that.
pub fn beta_moment_inversion(emp: &EmpiricalDistribution, n_agents: usize, h: f64) -> Result<MomentEstimate> {
    let (mean, var) = check_moment_inputs(emp, n_agents, h)?;
    let sum = mean * (1.0 - mean) / var - 1.0;
    let a = mean * sum;
    let b = (1.0 - mean) * sum;
    let n = n_agents as f64;
    let (alpha, beta) = if h == 0.0 {
        (a / (2.0 * n), b / (2.0 * n))
    } else {
        let rate_sum = (sum / n - h) / (2.0 * (1.0 - h));
        (rate_sum * a / sum, rate_sum * b / sum)
    };
    for (name, v) in [("alpha", alpha), ("beta", beta)] {
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::Domain(format!("moment estimate {name} = {v} outside (0, 1)")));
        }
    }
    Ok(MomentEstimate {
        alpha,
        beta,
        shape: ShapeParams {
            h_alpha: a,
            h_beta: b,
        },
    })
}

/// Mean and variance of `n1 / N` under the Café law at fixed `h`.
fn model_fraction_moments(n_agents: usize, alpha: f64, beta: f64, h: f64) -> (f64, f64) {
    let shape = shape_params_for_h(n_agents, alpha, beta, h);
    let dist = SpeakerCountDistribution::from_ln_weights(&ln_cafe_terms(n_agents, alpha, beta, shape));
    let n = n_agents as f64;
    (dist.mean() / n, dist.variance() / (n * n))
}

/// Method-of-moments estimate of `(alpha, beta)` at a fixed interpolation
/// weight `h`.
///
/// Finds the rates whose Café distribution has the same mean and variance of
/// `n1 / N` as the histogram. The rate sum `alpha + beta` is bisected on a log
/// scale against the variance, and for each trial sum the split
/// `alpha / (alpha + beta)` is bisected against the mean. A mirror-symmetric
/// histogram yields `alpha == beta` exactly. See [`beta_moment_inversion`]
/// for the cruder closed form.
pub fn fit_moments(emp: &EmpiricalDistribution, n_agents: usize, h: f64) -> Result<MomentEstimate> {
    let closed = beta_moment_inversion(emp, n_agents, h);
    let (mean, var) = check_moment_inputs(emp, n_agents, h)?;
    let counts = emp.counts();
    let symmetric = (0..=n_agents).all(|k| counts[k] == counts[n_agents - k]);

    let split_for = |rate_sum: f64| -> f64 {
        if symmetric {
            return 0.5;
        }
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..MOMENT_BISECTIONS {
            let p = 0.5 * (lo + hi);
            if model_fraction_moments(n_agents, p * rate_sum, (1.0 - p) * rate_sum, h).0 < mean {
                lo = p;
            } else {
                hi = p;
            }
        }
        0.5 * (lo + hi)
    };
    // Smaller rate sums push mass to the edges and raise the variance.
    let (mut lo, mut hi) = (1e-12f64.ln(), (1.0 - 1e-12f64).ln());
    for _ in 0..MOMENT_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        let rate_sum = mid.exp();
        let p = split_for(rate_sum);
        if model_fraction_moments(n_agents, p * rate_sum, (1.0 - p) * rate_sum, h).1 > var {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let rate_sum = (0.5 * (lo + hi)).exp();
    let p = split_for(rate_sum);
    let (alpha, beta) = (p * rate_sum, (1.0 - p) * rate_sum);

    let (m_fit, v_fit) = model_fraction_moments(n_agents, alpha, beta, h);
    if (m_fit - mean).abs() > 1e-6 * mean.max(1.0 - mean) || (v_fit - var).abs() > 1e-6 * var {
        return Err(Error::Domain(format!(
            "no Café law at h = {h} reproduces mean {mean} and variance {var}"
        )));
    }
    if !(alpha > 0.0 && beta > 0.0) {
        return Err(Error::Domain(format!("moment fit degenerated to alpha = {alpha}, beta = {beta}")));
    }
    let sum = mean * (1.0 - mean) / var - 1.0;
    Ok(MomentEstimate {
        alpha,
        beta,
        shape: closed.map(|c| c.shape).unwrap_or(ShapeParams {
            h_alpha: mean * sum,
            h_beta: (1.0 - mean) * sum,
        }),
    })
}

/// JSON fit report for one histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub params: ModelParams,
    pub h_min: f64,
    pub kl_at_min: f64,
    pub alpha_hat: Option<f64>,
    pub beta_hat: Option<f64>,
}

impl FitReport {
    /// Runs both fits; a failed moment fit leaves the estimates empty.
    pub fn build(emp: &EmpiricalDistribution, params: &ModelParams, moment_h: f64) -> Result<Self> {
        let point = fit_h_min(emp, params)?;
        let moments = fit_moments(emp, params.n_agents(), moment_h).ok();
        Ok(FitReport {
            params: *params,
            h_min: point.h_min,
            kl_at_min: point.kl_at_min,
            alpha_hat: moments.map(|m| m.alpha),
            beta_hat: moments.map(|m| m.beta),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{f_theta, h_of_theta};
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;

    fn params(n: usize, a: f64, b: f64, t: f64) -> ModelParams {
        ModelParams::new(n, a, b, t).unwrap()
    }

    fn sampled(p: &ModelParams, draws: u64, seed: u64) -> EmpiricalDistribution {
        let mut rng = rng_from_seed(seed);
        EmpiricalDistribution::from_counts(f_theta(p).sample_counts(draws, &mut rng)).unwrap()
    }

    #[test]
    fn constant_trajectory_histogram() {
        let p = params(5, 0.1, 0.1, 0.5);
        let traj = Trajectory {
            params: p,
            seed: 0,
            burn_in: 0,
            counts: vec![0; 17],
            states: None,
        };
        let emp = empirical_distribution(&traj).unwrap();
        assert_eq!(emp.counts()[0], 17);
        assert_eq!(emp.total(), 17);
        let empty = Trajectory {
            counts: vec![],
            ..traj
        };
        assert!(empirical_distribution(&empty).is_err());
    }

    #[test]
    fn kl_examples() {
        let q = SpeakerCountDistribution::new(vec![0.5, 0.5]).unwrap();
        let p = EmpiricalDistribution::from_counts(vec![3, 0]).unwrap();
        assert!((kl_divergence(&p, &q).unwrap() - 2f64.ln()).abs() < 1e-15);
        let same = EmpiricalDistribution::from_counts(vec![1, 1]).unwrap();
        assert_eq!(kl_divergence(&same, &q).unwrap(), 0.0);
        let zero = SpeakerCountDistribution::new(vec![1.0, 0.0]).unwrap();
        let hit = EmpiricalDistribution::from_counts(vec![1, 1]).unwrap();
        assert!(matches!(kl_divergence(&hit, &zero), Err(Error::Domain(_))));
        let wrong = SpeakerCountDistribution::new(vec![0.2, 0.3, 0.5]).unwrap();
        assert!(kl_divergence(&hit, &wrong).is_err());
    }

    #[test]
    fn local_minima_counting() {
        assert_eq!(count_local_minima(&[3.0, 2.0, 1.0, 2.0]), 1);
        assert_eq!(count_local_minima(&[1.0, 2.0, 3.0]), 1);
        assert_eq!(count_local_minima(&[3.0, 1.0, 2.0, 1.0, 3.0]), 2);
        assert_eq!(count_local_minima(&[1.0, 1.0]), 1);
        assert_eq!(count_local_minima(&[2.0, 1.0, 1.0, 2.0]), 1);
    }

    #[test]
    fn h_min_boundaries() {
        let p0 = params(512, 1.0 / 800.0, 1.0 / 800.0, 0.0);
        let fit = fit_h_min(&sampled(&p0, 1_000_000, 1), &p0).unwrap();
        assert!(fit.h_min <= 0.02, "{fit:?}");
        let p1 = p0.with_theta(1.0).unwrap();
        let fit = fit_h_min(&sampled(&p1, 1_000_000, 2), &p1).unwrap();
        assert!(fit.h_min >= 0.95, "{fit:?}");
    }

    #[test]
    fn h_min_is_deterministic() {
        let p = params(64, 1.0 / 200.0, 1.0 / 200.0, 0.9);
        let emp = sampled(&p, 100_000, 4);
        assert_eq!(fit_h_min(&emp, &p).unwrap(), fit_h_min(&emp, &p).unwrap());
    }

    #[test]
    fn h_min_recovers_interior_value() {
        let p = params(64, 1.0 / 200.0, 1.0 / 200.0, 0.97);
        let emp = sampled(&p, 1_000_000, 5);
        let fit = fit_h_min(&emp, &p).unwrap();
        let truth = h_of_theta(p.alpha(), p.beta(), p.theta());
        assert!((fit.h_min - truth).abs() < 0.03, "{} vs {truth}", fit.h_min);
        assert_eq!(fit.grid_local_minima, 1);
    }

    #[test]
    fn moments_round_trip() {
        let p = params(512, 1.0 / 800.0, 1.0 / 800.0, 0.0);
        let est = fit_moments(&sampled(&p, 1_000_000, 6), 512, 0.0).unwrap();
        assert!((est.alpha - p.alpha()).abs() / p.alpha() < 0.1);
        assert!((est.beta - p.beta()).abs() / p.beta() < 0.1);
    }

    #[test]
    fn moments_at_nonzero_h() {
        let p = params(64, 1.0 / 200.0, 1.0 / 400.0, 0.5);
        let h = h_of_theta(p.alpha(), p.beta(), p.theta());
        let est = fit_moments(&sampled(&p, 1_000_000, 7), 64, h).unwrap();
        assert!((est.alpha - p.alpha()).abs() / p.alpha() < 0.05, "{est:?}");
        assert!((est.beta - p.beta()).abs() / p.beta() < 0.05, "{est:?}");
        assert!(fit_moments(&sampled(&p, 1000, 7), 64, 1.0).is_err());
    }

    #[test]
    fn edge_peaked_rates_recovered_from_exact_moments() {
        let p = params(64, 1.0 / 800.0, 1.0 / 1600.0, 0.5);
        let h = h_of_theta(p.alpha(), p.beta(), p.theta());
        let counts = f_theta(&p).probs().iter().map(|q| (q * 1e15).round() as u64).collect();
        let emp = EmpiricalDistribution::from_counts(counts).unwrap();
        let est = fit_moments(&emp, 64, h).unwrap();
        assert!((est.alpha / p.alpha() - 1.0).abs() < 1e-6, "{est:?}");
        assert!((est.beta / p.beta() - 1.0).abs() < 1e-6, "{est:?}");
        let crude = beta_moment_inversion(&emp, 64, h).unwrap();
        assert!(crude.alpha < 0.7 * p.alpha());
    }

    #[test]
    fn symmetric_histogram_gives_equal_rates() {
        let emp = EmpiricalDistribution::from_counts(vec![5, 1, 2, 1, 5]).unwrap();
        let est = fit_moments(&emp, 4, 0.0).unwrap();
        assert_eq!(est.alpha, est.beta);
    }

    #[test]
    fn degenerate_moment_inputs() {
        let flat = EmpiricalDistribution::from_counts(vec![0, 0, 9, 0, 0]).unwrap();
        assert!(matches!(fit_moments(&flat, 4, 0.0), Err(Error::Domain(_))));
        let edge = EmpiricalDistribution::from_counts(vec![9, 0, 0]).unwrap();
        assert!(matches!(fit_moments(&edge, 2, 0.0), Err(Error::Domain(_))));
        let split = EmpiricalDistribution::from_counts(vec![5, 0, 5]).unwrap();
        assert!(matches!(fit_moments(&split, 2, 0.0), Err(Error::Domain(_))));
    }

    proptest! {
        #[test]
        fn kl_nonnegative(counts in prop::collection::vec(0u64..50, 2..20), seed in any::<u64>()) {
            prop_assume!(counts.iter().sum::<u64>() > 0);
            let bins = counts.len();
            let mut rng = rng_from_seed(seed);
            let raw: Vec<f64> = (0..bins).map(|_| rand::Rng::random::<f64>(&mut rng) + 1e-3).collect();
            let s: f64 = raw.iter().sum();
            let q = SpeakerCountDistribution::new(raw.iter().map(|x| x / s).collect()).unwrap();
            let p = EmpiricalDistribution::from_counts(counts).unwrap();
            prop_assert!(kl_divergence(&p, &q).unwrap() >= 0.0);
            prop_assert!(kl_divergence(&p, &p.to_distribution()).unwrap() < 1e-15);
        }
    }
}
