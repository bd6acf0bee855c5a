//! Synchronous stochastic update of a group of two-state agents.
//!
//! At every step each agent `i` looks at the weighted share of speakers it
//! hears, `S_i = sum_j w_ij s_j`, and speaks at the next step with probability
//! `(1 - alpha - beta) * S_i + alpha`. All agents read the same snapshot.
//!
//! The generator is consumed in a fixed pattern: one uniform draw per agent
//! per step, agents in ascending index order. The initial state uses one draw
//! per agent as well. Together with [`SimRng`](crate::rng::SimRng) this makes
//! every trajectory reproducible from `(params, weights, seed, steps)`.
//!
//! Influence for dense matrices is accumulated in fixed point (units of
//! 2^-52), so the running sums kept by [`simulate`] agree exactly with a fresh
//! evaluation by [`influence`] no matter in which order flips are applied.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::rng::{rng_from_seed, SimRng};
use crate::weights::WeightMatrix;

const FIXED_ONE: f64 = (1u64 << 52) as f64;

fn to_fixed(w: f64) -> i64 {
    (w * FIXED_ONE).round() as i64
}

fn from_fixed(x: i64) -> f64 {
    (x as f64 / FIXED_ONE).clamp(0.0, 1.0)
}

/// Speaking (`true`) or silent (`false`) flag for every agent.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GroupState {
    states: Vec<bool>,
    n1: usize,
}

impl GroupState {
    pub fn new(states: Vec<bool>) -> Self {
        let n1 = states.iter().filter(|&&s| s).count();
        GroupState { states, n1 }
    }

    pub fn silent(n: usize) -> Self {
        GroupState::new(vec![false; n])
    }

    /// Builds a state from 0/1 values; anything else is rejected.
    pub fn from_bits(bits: &[u8]) -> Result<Self> {
        bits.iter()
            .map(|&b| match b {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(Error::InvalidParameter(format!(
                    "agent state must be 0 or 1, got {other}"
                ))),
            })
            .collect::<Result<Vec<_>>>()
            .map(GroupState::new)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Number of speaking agents.
    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn get(&self, i: usize) -> bool {
        self.states[i]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.states
    }

    /// Run-length encoding such as `0:3 1:2`.
    pub fn to_rle(&self) -> String {
        let mut out = String::new();
        let mut iter = self.states.iter().peekable();
        while let Some(&s) = iter.next() {
            let mut len = 1;
            while iter.peek() == Some(&&s) {
                iter.next();
                len += 1;
            }
            if !out.is_empty() {
                out.push(' ');
            }
            out.push_str(&format!("{}:{}", u8::from(s), len));
        }
        out
    }

    pub fn from_rle(rle: &str) -> Result<Self> {
        let mut states = Vec::new();
        for run in rle.split_whitespace() {
            let (value, len) = run
                .split_once(':')
                .ok_or_else(|| Error::InvalidParameter(format!("bad run {run:?}")))?;
            let value = match value {
                "0" => false,
                "1" => true,
                _ => return Err(Error::InvalidParameter(format!("bad run {run:?}"))),
            };
            let len: usize = len
                .parse()
                .map_err(|_| Error::InvalidParameter(format!("bad run {run:?}")))?;
            states.extend(std::iter::repeat_n(value, len));
        }
        Ok(GroupState::new(states))
    }
}

fn cafe_influence(n: usize, theta: f64, own: bool, n1: usize) -> f64 {
    if n == 1 {
        return if own { 1.0 } else { 0.0 };
    }
    let own = u8::from(own);
    let others = n1.saturating_sub(own as usize) as f64;
    let value = theta * own as f64 + (1.0 - theta) / (n - 1) as f64 * others;
    value.clamp(0.0, 1.0)
}

/// Weighted share of speakers heard by agent `i`, in `[0, 1]`.
pub fn influence(state: &GroupState, weights: &WeightMatrix, i: usize) -> Result<f64> {
    let n = weights.n();
    if state.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: state.len(),
        });
    }
    if i >= n {
        return Err(Error::IndexOutOfRange { index: i, n });
    }
    Ok(match weights.cafe_theta() {
        Some(theta) => cafe_influence(n, theta, state.get(i), state.n1()),
        None => {
            let total: i64 = (0..n)
                .filter(|&j| state.get(j))
                .map(|j| to_fixed(weights.get(i, j)))
                .sum();
            from_fixed(total)
        }
    })
}

/// Probability of speaking next step given influence `s`.
#[inline]
pub fn speaking_probability(params: &ModelParams, s: f64) -> f64 {
    (1.0 - params.alpha() - params.beta()) * s + params.alpha()
}

fn check_dims(n_state: usize, params: &ModelParams, weights: &WeightMatrix) -> Result<()> {
    let n = params.n_agents();
    if weights.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: weights.n(),
        });
    }
    if n_state != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: n_state,
        });
    }
    Ok(())
}

/// Advances every agent once from the same snapshot.
pub fn step<R: Rng + ?Sized>(
    state: &GroupState,
    params: &ModelParams,
    weights: &WeightMatrix,
    rng: &mut R,
) -> Result<GroupState> {
    check_dims(state.len(), params, weights)?;
    let n = params.n_agents();
    let mut next = Vec::with_capacity(n);
    for i in 0..n {
        let p = speaking_probability(params, influence(state, weights, i)?);
        next.push(rng.random::<f64>() < p);
    }
    Ok(GroupState::new(next))
}

/// Draws each agent speaking with probability `alpha / (alpha + beta)`.
pub fn initial_state<R: Rng + ?Sized>(params: &ModelParams, rng: &mut R) -> GroupState {
    let p = params.speaking_marginal();
    GroupState::new(
        (0..params.n_agents())
            .map(|_| rng.random::<f64>() < p)
            .collect(),
    )
}

/// How a run is driven.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Retained steps.
    pub steps: u64,
    /// Discarded steps before recording; `None` uses [`ModelParams::default_burn_in`].
    pub burn_in: Option<u64>,
    pub seed: u64,
    pub keep_full_states: bool,
}

impl SimConfig {
    pub fn new(steps: u64, seed: u64) -> Self {
        SimConfig {
            steps,
            burn_in: None,
            seed,
            keep_full_states: false,
        }
    }

    pub fn burn_in(mut self, burn_in: u64) -> Self {
        self.burn_in = Some(burn_in);
        self
    }

    pub fn keep_full_states(mut self, keep: bool) -> Self {
        self.keep_full_states = keep;
        self
    }

    pub fn resolved_burn_in(&self, params: &ModelParams) -> u64 {
        self.burn_in.unwrap_or_else(|| params.default_burn_in())
    }
}

enum Field {
    Cafe {
        theta: f64,
    },
    Dense {
        /// Column-major fixed-point weights: `cols[j * n + i] = w_ij`.
        cols: Vec<i64>,
        /// Fixed-point influence on every agent.
        field: Vec<i64>,
    },
}

/// Stateful runner behind [`simulate`]; also usable for streaming.
pub struct Simulator {
    params: ModelParams,
    field: Field,
    state: Vec<bool>,
    next: Vec<bool>,
    flips: Vec<usize>,
    n1: usize,
    rng: SimRng,
}

impl Simulator {
    /// Draws the initial state from `seed`.
    pub fn new(params: ModelParams, weights: &WeightMatrix, seed: u64) -> Result<Self> {
        check_dims(params.n_agents(), &params, weights)?;
        let mut rng = rng_from_seed(seed);
        let init = initial_state(&params, &mut rng);
        Self::with_state(params, weights, init, rng)
    }

    pub fn with_state(
        params: ModelParams,
        weights: &WeightMatrix,
        init: GroupState,
        rng: SimRng,
    ) -> Result<Self> {
        check_dims(init.len(), &params, weights)?;
        let n = params.n_agents();
        let field = match weights.cafe_theta() {
            Some(theta) => Field::Cafe { theta },
            None => {
                let dense = weights
                    .dense_entries()
                    .expect("non-Café matrices are dense");
                let mut cols = vec![0i64; n * n];
                for i in 0..n {
                    for j in 0..n {
                        cols[j * n + i] = to_fixed(dense[i * n + j]);
                    }
                }
                let mut field = vec![0i64; n];
                for (j, _) in init.as_slice().iter().enumerate().filter(|(_, &s)| s) {
                    for (f, c) in field.iter_mut().zip(&cols[j * n..(j + 1) * n]) {
                        *f += c;
                    }
                }
                Field::Dense { cols, field }
            }
        };
        Ok(Simulator {
            params,
            field,
            n1: init.n1(),
            next: vec![false; n],
            state: init.states,
            flips: Vec::new(),
            rng,
        })
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn state(&self) -> GroupState {
        GroupState::new(self.state.clone())
    }

    /// Advances one step and returns the new speaker count.
    pub fn advance(&mut self) -> usize {
        let n = self.params.n_agents();
        let mut n1 = 0;
        match &mut self.field {
            Field::Cafe { theta } => {
                let p_silent =
                    speaking_probability(&self.params, cafe_influence(n, *theta, false, self.n1));
                let p_speaking =
                    speaking_probability(&self.params, cafe_influence(n, *theta, true, self.n1));
                for (next, &own) in self.next.iter_mut().zip(&self.state) {
                    let p = if own { p_speaking } else { p_silent };
                    let speak = self.rng.random::<f64>() < p;
                    *next = speak;
                    n1 += speak as usize;
                }
                std::mem::swap(&mut self.state, &mut self.next);
            }
            Field::Dense { cols, field } => {
                self.flips.clear();
                for i in 0..n {
                    let p = speaking_probability(&self.params, from_fixed(field[i]));
                    let speak = self.rng.random::<f64>() < p;
                    if speak != self.state[i] {
                        self.flips.push(i);
                    }
                    n1 += speak as usize;
                    self.next[i] = speak;
                }
                for &j in &self.flips {
                    let col = &cols[j * n..(j + 1) * n];
                    if self.next[j] {
                        for (f, c) in field.iter_mut().zip(col) {
                            *f += c;
                        }
                    } else {
                        for (f, c) in field.iter_mut().zip(col) {
                            *f -= c;
                        }
                    }
                }
                std::mem::swap(&mut self.state, &mut self.next);
            }
        }
        self.n1 = n1;
        n1
    }
}

/// A recorded run: speaker counts per retained step, optionally full states.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub params: ModelParams,
    pub seed: u64,
    pub burn_in: u64,
    pub counts: Vec<u32>,
    pub states: Option<Vec<GroupState>>,
}

impl Trajectory {
    pub fn states_retained(&self) -> bool {
        self.states.is_some()
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// CSV with header `t,n1`, `t` counting retained steps from zero.
    pub fn write_counts_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["t", "n1"])?;
        for (t, n1) in self.counts.iter().enumerate() {
            out.write_record([t.to_string(), n1.to_string()])?;
        }
        out.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// CSV with header `t,states`, each state run-length encoded.
    pub fn write_states_csv<W: Write>(&self, writer: W) -> Result<()> {
        let states = self
            .states
            .as_ref()
            .ok_or(Error::Empty("trajectory kept no full states"))?;
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["t", "states"])?;
        for (t, s) in states.iter().enumerate() {
            out.write_record([t.to_string(), s.to_rle()])?;
        }
        out.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn save_counts(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_counts_csv(std::io::BufWriter::new(file))
    }
}

/// Runs burn-in, then calls `visit` with the speaker count after each of
/// `steps` retained steps. Returns the burn-in actually used.
pub fn run_counts(
    params: &ModelParams,
    weights: &WeightMatrix,
    config: &SimConfig,
    mut visit: impl FnMut(usize),
) -> Result<u64> {
    if config.steps < 1 {
        return Err(Error::InvalidParameter("steps must be at least 1".into()));
    }
    let burn_in = config.resolved_burn_in(params);
    let mut sim = Simulator::new(*params, weights, config.seed)?;
    for _ in 0..burn_in {
        sim.advance();
    }
    for _ in 0..config.steps {
        visit(sim.advance());
    }
    Ok(burn_in)
}

/// Seeded simulation of `config.steps` retained steps.
pub fn simulate(params: &ModelParams, weights: &WeightMatrix, config: &SimConfig) -> Result<Trajectory> {
    if config.steps < 1 {
        return Err(Error::InvalidParameter("steps must be at least 1".into()));
    }
    let burn_in = config.resolved_burn_in(params);
    let mut sim = Simulator::new(*params, weights, config.seed)?;
    for _ in 0..burn_in {
        sim.advance();
    }
    let mut counts = Vec::with_capacity(config.steps as usize);
    let mut states = config.keep_full_states.then(Vec::new);
    for _ in 0..config.steps {
        counts.push(sim.advance() as u32);
        if let Some(states) = states.as_mut() {
            states.push(sim.state());
        }
    }
    Ok(Trajectory {
        params: *params,
        seed: config.seed,
        burn_in,
        counts,
        states,
    })
}
