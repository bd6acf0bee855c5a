//! Reference computations shared by the integration tests. Everything here is
//! written from the transition rule directly and shares no code paths with
//! the library beyond parameter and weight containers.

#![allow(dead_code)]

use cafe_theta::weights::WeightMatrix;
use cafe_theta::ModelParams;
use nalgebra::{DMatrix, DVector};

/// Stationary law of the full `2^N`-state chain, projected onto the speaker count.
pub fn full_chain_count_distribution(params: &ModelParams, weights: &WeightMatrix) -> Vec<f64> {
    let n = params.n_agents();
    assert!(n <= 12, "full chain oracle is limited to small groups");
    let states = 1usize << n;
    let (a, b) = (params.alpha(), params.beta());

    // kernel[s][t]: every agent decides independently given the influence it feels in s.
    let mut kernel = DMatrix::<f64>::zeros(states, states);
    for s in 0..states {
        let p: Vec<f64> = (0..n)
            .map(|i| {
                let influence: f64 = (0..n).filter(|&j| s >> j & 1 == 1).map(|j| weights.get(i, j)).sum();
                (1.0 - a - b) * influence + a
            })
            .collect();
        for t in 0..states {
            let mut prob = 1.0;
            for (i, &pi) in p.iter().enumerate() {
                prob *= if t >> i & 1 == 1 { pi } else { 1.0 - pi };
            }
            kernel[(s, t)] = prob;
        }
    }

    // pi (K - I) = 0 with sum(pi) = 1 replacing the last balance equation.
    let mut system = kernel.transpose() - DMatrix::identity(states, states);
    for j in 0..states {
        system[(states - 1, j)] = 1.0;
    }
    let mut rhs = DVector::zeros(states);
    rhs[states - 1] = 1.0;
    let pi = system.lu().solve(&rhs).expect("irreducible chain");

    let mut counts = vec![0.0; n + 1];
    for s in 0..states {
        counts[s.count_ones() as usize] += pi[s];
    }
    counts
}

/// `KL(p || q)` from raw histogram counts, skipping empty bins.
pub fn kl_counts(counts: &[u64], q: &[f64]) -> f64 {
    let total: u64 = counts.iter().sum();
    counts
        .iter()
        .zip(q)
        .filter(|(&c, _)| c > 0)
        .map(|(&c, &qk)| {
            let p = c as f64 / total as f64;
            p * (p / qk).ln()
        })
        .sum()
}

/// `KL(p || q)` between two probability vectors.
pub fn kl_probs(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&pk, _)| pk > 0.0)
        .map(|(&pk, &qk)| pk * (pk / qk).ln())
        .sum()
}

/// Ordinary least squares `y = slope x + intercept` with its R^2.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = sxy * sxy / (sxx * syy);
    (slope, intercept, r2)
}

/// `KL(p || q)` with `q` given by unnormalized log weights, safe where `q` underflows.
pub fn kl_probs_ln(p: &[f64], ln_q: &[f64]) -> f64 {
    let max = ln_q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ln_z = max + ln_q.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    p.iter()
        .zip(ln_q)
        .filter(|(&pk, _)| pk > 0.0)
        .map(|(&pk, &lq)| pk * (pk.ln() - (lq - ln_z)))
        .sum()
}

/// Exact stationary speaker-count law under Café weights. Agents are
/// exchangeable, so `n1` is itself a Markov chain: the next count is the sum of
/// the speakers who keep talking and the silent agents who start.
pub fn lumped_cafe_count_distribution(params: &ModelParams) -> Vec<f64> {
    use statrs::distribution::{Binomial, Discrete};

    let n = params.n_agents();
    let (a, b, theta) = (params.alpha(), params.beta(), params.theta());
    let others = (n - 1) as f64;
    let binomial = |trials: usize, p: f64| -> Vec<f64> {
        let d = Binomial::new(p.clamp(0.0, 1.0), trials as u64).unwrap();
        (0..=trials as u64).map(|k| d.pmf(k)).collect()
    };

    let states = n + 1;
    let mut kernel = DMatrix::<f64>::zeros(states, states);
    for n1 in 0..=n {
        let keep = (1.0 - a - b) * (theta + (1.0 - theta) * (n1 as f64 - 1.0) / others) + a;
        let start = (1.0 - a - b) * (1.0 - theta) * n1 as f64 / others + a;
        let stay = binomial(n1, keep);
        let join = binomial(n - n1, start);
        for (i, &ps) in stay.iter().enumerate() {
            for (j, &pj) in join.iter().enumerate() {
                kernel[(n1, i + j)] += ps * pj;
            }
        }
    }

    let mut system = kernel.transpose() - DMatrix::identity(states, states);
    for j in 0..states {
        system[(states - 1, j)] = 1.0;
    }
    let mut rhs = DVector::zeros(states);
    rhs[states - 1] = 1.0;
    let pi = system.lu().solve(&rhs).expect("irreducible chain");
    pi.iter().map(|p| p.max(0.0)).collect()
}
