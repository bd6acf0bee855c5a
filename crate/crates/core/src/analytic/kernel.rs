//! The speaker-count chain of the uniform group and its exact stationary law.
//!
//! With every weight equal to `1/N` all agents see the same influence, so the
//! next count is binomial with success probability
//! `q = (n0 / N) alpha + (n1 / N)(1 - beta)`. The `(N + 1)`-state chain is small
//! enough to solve directly, which makes it the reference the Café
//! approximation is checked against.

use nalgebra::{DMatrix, DVector};

use super::SpeakerCountDistribution;
use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::special::ln_choose;

/// Largest kernel accepted by [`exact_stationary`].
pub const MAX_KERNEL_SIZE: usize = 4097;

/// Residual bound `||f K - f||_inf` required of a stationary solve.
pub const STATIONARY_RESIDUAL: f64 = 1e-10;

/// Dense row-stochastic transition matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    size: usize,
    entries: Vec<f64>,
}

impl Kernel {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let size = rows.len();
        if size == 0 {
            return Err(Error::Empty("kernel"));
        }
        let mut entries = Vec::with_capacity(size * size);
        for row in rows {
            if row.len() != size {
                return Err(Error::DimensionMismatch {
                    expected: size,
                    actual: row.len(),
                });
            }
            entries.extend(row);
        }
        Self::from_dense(size, entries)
    }

    pub fn from_dense(size: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != size * size {
            return Err(Error::DimensionMismatch {
                expected: size * size,
                actual: entries.len(),
            });
        }
        for (row, chunk) in entries.chunks_exact(size).enumerate() {
            if chunk.iter().any(|&x| !(x >= 0.0)) {
                return Err(Error::Domain(format!("kernel row {row} has a negative entry")));
            }
            let sum: f64 = chunk.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::NotRowStochastic { row, sum });
            }
        }
        Ok(Kernel { size, entries })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.entries[from * self.size + to]
    }

    pub fn row(&self, from: usize) -> &[f64] {
        &self.entries[from * self.size..(from + 1) * self.size]
    }

    fn reaches_all(&self, forward: bool) -> bool {
        let mut seen = vec![false; self.size];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for v in 0..self.size {
                let w = if forward { self.get(u, v) } else { self.get(v, u) };
                if w > 0.0 && !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    pub fn is_irreducible(&self) -> bool {
        self.reaches_all(true) && self.reaches_all(false)
    }
}

fn success_probability(params: &ModelParams, n1: usize) -> (f64, f64) {
    let n = params.n_agents();
    let speaking = n1 as f64 / n as f64;
    let silent = (n - n1) as f64 / n as f64;
    let q = silent * params.alpha() + speaking * (1.0 - params.beta());
    let not_q = silent * (1.0 - params.alpha()) + speaking * params.beta();
    (q, not_q)
}

/// Probability that `n1` speakers become `n1_prime` in one step when every
/// weight is `1/N`.
pub fn uniform_kernel(n1: usize, n1_prime: usize, params: &ModelParams) -> f64 {
    let n = params.n_agents();
    assert!(n1 <= n && n1_prime <= n, "speaker count exceeds group size");
    let (q, not_q) = success_probability(params, n1);
    (ln_choose(n, n1_prime) + n1_prime as f64 * q.ln() + (n - n1_prime) as f64 * not_q.ln()).exp()
}

/// Full `(N + 1) x (N + 1)` uniform-group kernel.
pub fn uniform_kernel_matrix(params: &ModelParams) -> Kernel {
    let n = params.n_agents();
    let size = n + 1;
    let ln_c: Vec<f64> = (0..=n).map(|k| ln_choose(n, k)).collect();
    let mut entries = Vec::with_capacity(size * size);
    for n1 in 0..=n {
        let (q, not_q) = success_probability(params, n1);
        let (lq, lnq) = (q.ln(), not_q.ln());
        entries.extend((0..=n).map(|k| (ln_c[k] + k as f64 * lq + (n - k) as f64 * lnq).exp()));
    }
    Kernel { size, entries }
}

/// Stationary vector `f = f K` by a dense LU solve with the normalization
/// `sum f = 1` replacing one balance equation.
pub fn exact_stationary(kernel: &Kernel) -> Result<SpeakerCountDistribution> {
    let size = kernel.size();
    if size > MAX_KERNEL_SIZE {
        return Err(Error::InvalidParameter(format!(
            "kernel of size {size} exceeds the dense-solve limit {MAX_KERNEL_SIZE}"
        )));
    }
    if !kernel.is_irreducible() {
        return Err(Error::NotIrreducible);
    }
    // Row i of (K^T - I) is the balance equation for state i.
    let mut system = DMatrix::from_fn(size, size, |i, j| {
        kernel.get(j, i) - if i == j { 1.0 } else { 0.0 }
    });
    for j in 0..size {
        system[(size - 1, j)] = 1.0;
    }
    let mut rhs = DVector::zeros(size);
    rhs[size - 1] = 1.0;
    let solution = system
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("stationary system is singular".into()))?;

    // Roundoff floor scales with the largest entry.
    let floor = -1e-11 * solution.amax();
    let mut probs: Vec<f64> = solution.iter().map(|&x| if x < 0.0 && x > floor { 0.0 } else { x }).collect();
    if probs.iter().any(|&x| !(x >= 0.0)) {
        return Err(Error::Singular("stationary solve produced negative mass".into()));
    }
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);

    let residual = (0..size)
        .map(|j| {
            let flow: f64 = (0..size).map(|i| probs[i] * kernel.get(i, j)).sum();
            (flow - probs[j]).abs()
        })
        .fold(0.0, f64::max);
    if residual > STATIONARY_RESIDUAL {
        return Err(Error::Singular(format!(
            "stationary residual {residual:e} exceeds {STATIONARY_RESIDUAL:e}"
        )));
    }
    SpeakerCountDistribution::new(probs)
}
