//! Parameter sweeps behind the command-line tool.
//!
//! A [`SweepSpec`] expands into cells, one per parameter combination and
//! seed. Cells are independent and run on a worker pool; results come back
//! in cell order so the written files do not depend on scheduling.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{critical_theta, f_theta, h_of_theta, shape_params};
use crate::engine::{run_counts, SimConfig};
use crate::error::{Error, Result};
use crate::fitting::{fit_h_min, kl_divergence, EmpiricalDistribution};
use crate::params::ModelParams;
use crate::rng::derive_seed;
use crate::silence::{silence_summary, P0_SPLIT};
use crate::weights::{make_cafe_weights, make_distance_weights, WeightMatrix};

/// Self-weights listed for the simulation grid.
pub const THETA_GRID: [f64; 9] = [0.0, 0.25, 0.5, 0.75, 0.8, 0.85, 0.9, 0.95, 1.0];
/// Group sizes of the reference simulation grid.
pub const N_GRID: [usize; 4] = [512, 1024, 2048, 4096];
/// Start and stop rates of the reference simulation grid.
pub const RATE_GRID: [f64; 7] = [
    1.0 / 100.0,
    1.0 / 200.0,
    1.0 / 400.0,
    1.0 / 800.0,
    1.0 / 1600.0,
    1.0 / 3200.0,
    1.0 / 6400.0,
];
pub const DEFAULT_STEPS: u64 = 1_000_000;

/// Which interaction matrix a cell uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightScheme {
    #[default]
    Cafe,
    Distance,
}

impl std::str::FromStr for WeightScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cafe" => Ok(WeightScheme::Cafe),
            "distance" => Ok(WeightScheme::Distance),
            other => Err(Error::InvalidParameter(format!("unknown weight scheme {other:?}"))),
        }
    }
}

/// A grid of parameter values plus the simulation settings shared by all cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub n_values: Vec<usize>,
    pub alpha_values: Vec<f64>,
    pub beta_values: Vec<f64>,
    pub theta_values: Vec<f64>,
    pub steps: u64,
    pub burn_in: Option<u64>,
    pub seed: u64,
    pub seeds_per_cell: u64,
    pub weights: WeightScheme,
    /// Use `beta_values` only through `beta = alpha` when false.
    pub cross_beta: bool,
}

impl SweepSpec {
    /// A single parameter set.
    pub fn single(params: &ModelParams, steps: u64, seed: u64) -> Self {
        SweepSpec {
            n_values: vec![params.n_agents()],
            alpha_values: vec![params.alpha()],
            beta_values: vec![params.beta()],
            theta_values: vec![params.theta()],
            steps,
            burn_in: None,
            seed,
            seeds_per_cell: 1,
            weights: WeightScheme::Cafe,
            cross_beta: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_values.is_empty() || self.alpha_values.is_empty() || self.theta_values.is_empty() {
            return Err(Error::InvalidParameter("every parameter list needs a value".into()));
        }
        if self.cross_beta && self.beta_values.is_empty() {
            return Err(Error::InvalidParameter("every parameter list needs a value".into()));
        }
        if self.steps < 1 {
            return Err(Error::InvalidParameter("steps must be at least 1".into()));
        }
        if self.seeds_per_cell < 1 {
            return Err(Error::InvalidParameter("seeds per cell must be at least 1".into()));
        }
        self.parameter_sets().map(|_| ())
    }

    /// All parameter combinations in row-major order (N, alpha, beta, theta).
    pub fn parameter_sets(&self) -> Result<Vec<ModelParams>> {
        let mut out = Vec::new();
        for &n in &self.n_values {
            for &alpha in &self.alpha_values {
                let betas: &[f64] = if self.cross_beta {
                    &self.beta_values
                } else {
                    std::slice::from_ref(&alpha)
                };
                for &beta in betas {
                    for &theta in &self.theta_values {
                        out.push(ModelParams::new(n, alpha, beta, theta)?);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Cells with their derived seeds.
    pub fn cells(&self) -> Result<Vec<Cell>> {
        self.validate()?;
        let sets = self.parameter_sets()?;
        let mut cells = Vec::with_capacity(sets.len() * self.seeds_per_cell as usize);
        for (i, params) in sets.into_iter().enumerate() {
            for r in 0..self.seeds_per_cell {
                cells.push(Cell {
                    params,
                    replicate: r,
                    seed: derive_seed(self.seed, i as u64 * self.seeds_per_cell + r),
                });
            }
        }
        Ok(cells)
    }

    pub fn sim_config(&self, seed: u64) -> SimConfig {
        let config = SimConfig::new(self.steps, seed);
        match self.burn_in {
            Some(b) => config.burn_in(b),
            None => config,
        }
    }
}

/// One unit of work: a parameter set and the seed of one replicate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub params: ModelParams,
    pub replicate: u64,
    pub seed: u64,
}

/// Weights of a cell; distance weights draw positions from a stream of the cell seed.
pub fn cell_weights(cell: &Cell, scheme: WeightScheme) -> Result<WeightMatrix> {
    let p = &cell.params;
    match scheme {
        WeightScheme::Cafe => make_cafe_weights(p.n_agents(), p.theta()),
        WeightScheme::Distance => {
            Ok(make_distance_weights(p.n_agents(), p.theta(), derive_seed(cell.seed, 1))?.weights)
        }
    }
}

/// Speaker-count histogram of one simulated run.
pub fn simulate_histogram(
    params: &ModelParams,
    weights: &WeightMatrix,
    config: &SimConfig,
) -> Result<EmpiricalDistribution> {
    let mut counts = vec![0u64; params.n_agents() + 1];
    run_counts(params, weights, config, |n1| counts[n1] += 1)?;
    EmpiricalDistribution::from_counts(counts)
}

/// Runs `work` on every item with at most `jobs` threads, keeping input order.
pub fn run_parallel<T, R, F>(jobs: usize, items: &[T], work: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| items.par_iter().map(&work).collect())
}

/// Simulated histogram of one cell next to the analytic distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateResult {
    pub cell: Cell,
    pub kl: f64,
    pub histogram: EmpiricalDistribution,
    pub analytic: Vec<f64>,
}

/// Flat CSV row: one per cell and speaker count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateRow {
    pub n: usize,
    pub alpha: f64,
    pub beta: f64,
    pub theta: f64,
    pub seed: u64,
    pub n1: usize,
    pub count: u64,
    pub empirical: f64,
    pub analytic: f64,
    pub kl: f64,
}

impl SimulateResult {
    pub fn rows(&self) -> Vec<SimulateRow> {
        let p = &self.cell.params;
        let freq = self.histogram.frequencies();
        (0..=p.n_agents())
            .map(|n1| SimulateRow {
                n: p.n_agents(),
                alpha: p.alpha(),
                beta: p.beta(),
                theta: p.theta(),
                seed: self.cell.seed,
                n1,
                count: self.histogram.counts()[n1],
                empirical: freq[n1],
                analytic: self.analytic[n1],
                kl: self.kl,
            })
            .collect()
    }
}

pub fn simulate_cell(cell: &Cell, spec: &SweepSpec) -> Result<SimulateResult> {
    let weights = cell_weights(cell, spec.weights)?;
    simulate_cell_with(cell, &weights, spec)
}

/// Like [`simulate_cell`] with caller-supplied weights.
pub fn simulate_cell_with(cell: &Cell, weights: &WeightMatrix, spec: &SweepSpec) -> Result<SimulateResult> {
    let histogram = simulate_histogram(&cell.params, weights, &spec.sim_config(cell.seed))?;
    let model = f_theta(&cell.params);
    Ok(SimulateResult {
        cell: *cell,
        kl: kl_divergence(&histogram, &model)?,
        analytic: model.probs().to_vec(),
        histogram,
    })
}

/// One heatmap cell of the analytic silence probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapRow {
    pub n: usize,
    pub alpha: f64,
    pub beta: f64,
    pub theta: f64,
    pub p0_analytic: f64,
    pub h_alpha: f64,
    pub h_beta: f64,
    /// Self-weight where `h_alpha = 1`, if it exists.
    pub theta_star: Option<f64>,
    /// True when `h_alpha - 1` changes sign between the previous listed
    /// `theta` and this one.
    pub is_critical_boundary: bool,
}

/// Analytic heatmap over the sweep's parameter sets; no simulation involved.
pub fn heatmap(spec: &SweepSpec) -> Result<Vec<HeatmapRow>> {
    let mut rows: Vec<HeatmapRow> = Vec::new();
    for params in spec.parameter_sets()? {
        let shape = shape_params(&params);
        let dist = f_theta(&params);
        let prev = rows.last().filter(|r| {
            r.n == params.n_agents() && r.alpha == params.alpha() && r.beta == params.beta()
        });
        let boundary = prev.is_some_and(|r| (r.h_alpha >= 1.0) != (shape.h_alpha >= 1.0));
        rows.push(HeatmapRow {
            n: params.n_agents(),
            alpha: params.alpha(),
            beta: params.beta(),
            theta: params.theta(),
            p0_analytic: dist.prob(0),
            h_alpha: shape.h_alpha,
            h_beta: shape.h_beta,
            theta_star: critical_theta(params.n_agents(), params.alpha(), params.beta()),
            is_critical_boundary: boundary,
        });
    }
    Ok(rows)
}

/// Fitted interpolation weight of one simulated cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HminRow {
    pub n: usize,
    pub alpha: f64,
    pub beta: f64,
    pub theta: f64,
    pub seed: u64,
    pub h_min: f64,
    pub kl_at_min: f64,
    pub h_of_theta: f64,
    pub grid_local_minima: usize,
}

pub fn hmin_cell(cell: &Cell, spec: &SweepSpec) -> Result<HminRow> {
    let weights = cell_weights(cell, spec.weights)?;
    let p = &cell.params;
    let histogram = simulate_histogram(p, &weights, &spec.sim_config(cell.seed))?;
    let point = fit_h_min(&histogram, p)?;
    Ok(HminRow {
        n: p.n_agents(),
        alpha: p.alpha(),
        beta: p.beta(),
        theta: p.theta(),
        seed: cell.seed,
        h_min: point.h_min,
        kl_at_min: point.kl_at_min,
        h_of_theta: h_of_theta(p.alpha(), p.beta(), p.theta()),
        grid_local_minima: point.grid_local_minima,
    })
}

/// Measured against predicted silence durations for one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SilenceRow {
    pub n: usize,
    pub alpha: f64,
    pub beta: f64,
    pub theta: f64,
    pub seed: u64,
    pub theory_mean: f64,
    pub empirical_mean: f64,
    pub theory_var: f64,
    pub empirical_var: f64,
    pub p0_analytic: f64,
    pub p0_empirical: f64,
    pub n_observed: usize,
    /// Analytic `P0` exceeds the reliability split.
    pub above_split: bool,
}

pub fn silence_cell(cell: &Cell, spec: &SweepSpec) -> Result<SilenceRow> {
    let weights = cell_weights(cell, spec.weights)?;
    let p = &cell.params;
    let mut counts = Vec::with_capacity(spec.steps as usize);
    run_counts(p, &weights, &spec.sim_config(cell.seed), |n1| counts.push(n1 as u32))?;
    let summary = silence_summary(&counts, p);
    let p0 = f_theta(p).prob(0);
    Ok(SilenceRow {
        n: p.n_agents(),
        alpha: p.alpha(),
        beta: p.beta(),
        theta: p.theta(),
        seed: cell.seed,
        theory_mean: summary.theory_mean,
        empirical_mean: summary.mean,
        theory_var: summary.theory_variance,
        empirical_var: summary.variance,
        p0_analytic: p0,
        p0_empirical: summary.p0_estimate,
        n_observed: summary.n_observed(),
        above_split: p0 > P0_SPLIT,
    })
}

/// Sidecar written next to every output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: Option<u64>,
    pub parameters: serde_json::Value,
}

impl Metadata {
    pub fn new(command: &str, seed: Option<u64>, parameters: serde_json::Value) -> Self {
        Metadata {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed,
            parameters,
        }
    }

    /// `<output>.meta.json`.
    pub fn sidecar_path(output: &Path) -> std::path::PathBuf {
        let mut name = output.as_os_str().to_owned();
        name.push(".meta.json");
        name.into()
    }

    pub fn write_for(&self, output: &Path) -> Result<()> {
        let path = Self::sidecar_path(output);
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}

/// Writes serializable rows as CSV with a header row.
pub fn write_rows_csv<W: std::io::Write, R: Serialize>(writer: W, rows: &[R]) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    for row in rows {
        out.serialize(row)?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}
