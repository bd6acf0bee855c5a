//! Measured durations of group silence and their comparison with theory.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::analytic::{expected_silence_duration, silence_duration_variance};
use crate::error::Result;
use crate::params::ModelParams;

/// Below this silence probability measured durations are unreliable.
pub const P0_SPLIT: f64 = 1e-3;

/// Lengths of maximal runs of `n1 = 0`. Runs touching either end of the
/// record are dropped since their true length is unknown.
pub fn detect_silences(counts: &[u32]) -> Vec<u64> {
    let mut durations = Vec::new();
    let mut run: u64 = 0;
    let mut open = false;
    let mut seen_speech = false;
    for &c in counts {
        if c == 0 {
            run += 1;
            open = true;
        } else {
            if open && seen_speech {
                durations.push(run);
            }
            run = 0;
            open = false;
            seen_speech = true;
        }
    }
    durations
}

/// Empirical silence statistics next to their analytic values.
///
/// With no complete silence observed, `empty` is set and the empirical
/// fields are NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SilenceSummary {
    pub durations: Vec<u64>,
    pub empty: bool,
    pub mean: f64,
    /// Unbiased sample variance; NaN with fewer than two durations.
    pub variance: f64,
    pub theory_mean: f64,
    pub theory_variance: f64,
    pub p0_estimate: f64,
}

impl SilenceSummary {
    pub fn n_observed(&self) -> usize {
        self.durations.len()
    }

    /// Standard error of the mean duration.
    pub fn standard_error(&self) -> f64 {
        (self.variance / self.durations.len() as f64).sqrt()
    }

    /// CSV with header `duration`.
    pub fn write_durations_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["duration"])?;
        for d in &self.durations {
            out.write_record([d.to_string()])?;
        }
        out.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Detects silences in a count record and summarizes them.
pub fn silence_summary(counts: &[u32], params: &ModelParams) -> SilenceSummary {
    let durations = detect_silences(counts);
    let zeros = counts.iter().filter(|&&c| c == 0).count();
    let p0_estimate = if counts.is_empty() {
        0.0
    } else {
        zeros as f64 / counts.len() as f64
    };
    let k = durations.len() as f64;
    let (mean, variance) = match durations.len() {
        0 => (f64::NAN, f64::NAN),
        1 => (durations[0] as f64, f64::NAN),
        _ => {
            let mean = durations.iter().map(|&d| d as f64).sum::<f64>() / k;
            let ss: f64 = durations.iter().map(|&d| (d as f64 - mean).powi(2)).sum();
            (mean, ss / (k - 1.0))
        }
    };
    SilenceSummary {
        empty: durations.is_empty(),
        durations,
        mean,
        variance,
        theory_mean: expected_silence_duration(params),
        theory_variance: silence_duration_variance(params),
        p0_estimate,
    }
}

/// Empirical survival ratios `P(tau > k) / P(tau > k - 1)` for `k = 1..=kmax`,
/// each with its binomial standard error. Stops early once the risk set empties.
pub fn survival_ratios(durations: &[u64], kmax: u64) -> Vec<(u64, f64, f64)> {
    let mut out = Vec::new();
    for k in 1..=kmax {
        let at_risk = durations.iter().filter(|&&d| d >= k).count();
        if at_risk == 0 {
            break;
        }
        let survive = durations.iter().filter(|&&d| d > k).count();
        let r = survive as f64 / at_risk as f64;
        out.push((k, r, (r * (1.0 - r) / at_risk as f64).sqrt()));
    }
    out
}
