//! Frame energies of recorded conversation and their mapping onto speaker counts.
//!
//! A recording is cut into overlapping frames, each frame's energy is taken
//! from its power spectrum, and the resulting decibel trace is turned into a
//! histogram over `0..=parents * M` "speaking sub-agents" that the model can
//! be fitted to.

pub mod wav;

use std::io::Write;
use std::path::Path;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::analytic::f_theta;
use crate::error::{Error, Result};
use crate::fitting::{fit_moments, kl_divergence, EmpiricalDistribution};
use crate::params::ModelParams;

pub use wav::{read_wav, write_wav_i16, MonoAudio};

pub const DEFAULT_FRAME_LEN: usize = 512;
pub const DEFAULT_HOP_LEN: usize = 256;
pub const DEFAULT_CLIP_LO: f64 = 0.1;
pub const DEFAULT_CLIP_HI: f64 = 99.9;
pub const DEFAULT_SEGMENTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    #[default]
    Hann,
    Rect,
}

impl Window {
    /// Periodic window coefficients, `0.5 - 0.5 cos(2 pi n / L)` for Hann.
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            Window::Rect => vec![1.0; len],
            Window::Hann => (0..len)
                .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / len as f64).cos())
                .collect(),
        }
    }
}

impl std::str::FromStr for Window {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hann" => Ok(Window::Hann),
            "rect" => Ok(Window::Rect),
            other => Err(Error::InvalidParameter(format!("unknown window {other:?}"))),
        }
    }
}

/// Framing parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameConfig {
    pub frame_len: usize,
    pub hop_len: usize,
    pub window: Window,
}

impl Default for FrameConfig {
    fn default() -> Self {
        FrameConfig {
            frame_len: DEFAULT_FRAME_LEN,
            hop_len: DEFAULT_HOP_LEN,
            window: Window::Hann,
        }
    }
}

/// Per-frame energies in decibels, zero-energy frames removed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyTrace {
    pub frame_db: Vec<f64>,
    pub frame_len: usize,
    pub hop_len: usize,
    pub sample_rate: u32,
    pub dropped_zero_frames: usize,
}

impl EnergyTrace {
    pub fn len(&self) -> usize {
        self.frame_db.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frame_db.is_empty()
    }

    /// CSV with header `frame_index,db`; indices count retained frames.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["frame_index", "db"])?;
        for (i, db) in self.frame_db.iter().enumerate() {
            out.write_record([i.to_string(), format!("{db:e}")])?;
        }
        out.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    fn with_db(&self, frame_db: Vec<f64>) -> Self {
        EnergyTrace {
            frame_db,
            ..self.clone()
        }
    }
}

/// Number of whole frames, `floor((len - frame) / hop) + 1`.
pub fn frame_count(len: usize, frame_len: usize, hop_len: usize) -> usize {
    if len < frame_len {
        0
    } else {
        (len - frame_len) / hop_len + 1
    }
}

/// Energy of each frame as the full power-spectrum sum
/// `|X_0|^2 + 2 sum_{0<k<L/2} |X_k|^2 + |X_{L/2}|^2` (the last term only for
/// even `L`), which equals `sum_k |X_k|^2` for real frames.
pub fn frame_power(samples: &[f64], cfg: &FrameConfig) -> Result<Vec<f64>> {
    if cfg.frame_len == 0 || cfg.hop_len == 0 {
        return Err(Error::InvalidParameter("frame and hop length must be positive".into()));
    }
    if samples.len() < cfg.frame_len {
        return Err(Error::InvalidParameter(format!(
            "need at least {} samples, got {}",
            cfg.frame_len,
            samples.len()
        )));
    }
    let len = cfg.frame_len;
    let window = cfg.window.coefficients(len);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(len);
    let mut buf = vec![Complex::new(0.0, 0.0); len];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let frames = frame_count(samples.len(), len, cfg.hop_len);
    let mut energies = Vec::with_capacity(frames);
    for f in 0..frames {
        let start = f * cfg.hop_len;
        for ((b, &x), &w) in buf.iter_mut().zip(&samples[start..start + len]).zip(&window) {
            *b = Complex::new(x * w, 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        let half = len / 2;
        let mut e = buf[0].norm_sqr();
        let upper = if len % 2 == 0 { half } else { half + 1 };
        for c in &buf[1..upper] {
            e += 2.0 * c.norm_sqr();
        }
        if len % 2 == 0 {
            e += buf[half].norm_sqr();
        }
        energies.push(e);
    }
    Ok(energies)
}

/// Frame energies in dB, `10 log10(E)`, dropping frames of zero energy.
pub fn frame_energies(samples: &[f64], sample_rate: u32, cfg: &FrameConfig) -> Result<EnergyTrace> {
    let power = frame_power(samples, cfg)?;
    let frame_db: Vec<f64> = power
        .iter()
        .filter(|&&e| e > 0.0)
        .map(|e| 10.0 * e.log10())
        .collect();
    Ok(EnergyTrace {
        dropped_zero_frames: power.len() - frame_db.len(),
        frame_db,
        frame_len: cfg.frame_len,
        hop_len: cfg.hop_len,
        sample_rate,
    })
}

/// Percentile with linear interpolation between order statistics.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (rank - lo as f64)
}

/// Keeps frames whose dB lies within the `[lo, hi]` percentile range.
pub fn remove_outliers(trace: &EnergyTrace, lo: f64, hi: f64) -> Result<EnergyTrace> {
    if trace.is_empty() {
        return Err(Error::Empty("energy trace"));
    }
    if !(0.0 <= lo && lo <= hi && hi <= 100.0) {
        return Err(Error::InvalidParameter(format!(
            "clip percentiles must satisfy 0 <= lo <= hi <= 100, got {lo}, {hi}"
        )));
    }
    let mut sorted = trace.frame_db.clone();
    sorted.sort_by(f64::total_cmp);
    let (min, max) = (percentile(&sorted, lo), percentile(&sorted, hi));
    let kept = trace
        .frame_db
        .iter()
        .copied()
        .filter(|&db| db >= min && db <= max)
        .collect();
    Ok(trace.with_db(kept))
}

/// Population variance of the minimum dB over `segments` contiguous parts.
pub fn segment_stability(trace: &EnergyTrace, segments: usize) -> Result<f64> {
    let len = trace.len();
    if segments == 0 {
        return Err(Error::InvalidParameter("segment count must be positive".into()));
    }
    if len < segments {
        return Err(Error::InvalidParameter(format!(
            "trace of {len} frames is shorter than {segments} segments"
        )));
    }
    let minima: Vec<f64> = (0..segments)
        .map(|i| {
            trace.frame_db[i * len / segments..(i + 1) * len / segments]
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let mean = minima.iter().sum::<f64>() / segments as f64;
    Ok(minima.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / segments as f64)
}

/// Parent agents, each split into `sub_agents` speakers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetaAgentConfig {
    pub parents: usize,
    pub sub_agents: usize,
}

impl Default for MetaAgentConfig {
    fn default() -> Self {
        MetaAgentConfig {
            parents: 4,
            sub_agents: 8,
        }
    }
}

impl MetaAgentConfig {
    pub fn new(parents: usize, sub_agents: usize) -> Result<Self> {
        if parents < 1 || sub_agents < 1 {
            return Err(Error::InvalidParameter(
                "parents and sub-agents per parent must be at least 1".into(),
            ));
        }
        Ok(MetaAgentConfig { parents, sub_agents })
    }

    pub fn total(&self) -> usize {
        self.parents * self.sub_agents
    }
}

/// Maps `[min dB, max dB]` affinely onto `0..=parents * M`, rounding each frame
/// to the nearest count.
pub fn db_to_counts(trace: &EnergyTrace, cfg: &MetaAgentConfig) -> Result<EmpiricalDistribution> {
    if trace.is_empty() {
        return Err(Error::Empty("energy trace"));
    }
    let n = cfg.total();
    let min = trace.frame_db.iter().copied().fold(f64::INFINITY, f64::min);
    let max = trace.frame_db.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max > min) {
        return Err(Error::Domain("energy trace is constant".into()));
    }
    let scale = n as f64 / (max - min);
    EmpiricalDistribution::from_values(
        n,
        trace
            .frame_db
            .iter()
            .map(|&db| (((db - min) * scale).round() as usize).min(n)),
    )
}

/// Model fitted to one recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingFit {
    pub params: ModelParams,
    pub kl: f64,
    pub histogram: EmpiricalDistribution,
}

impl RecordingFit {
    /// CSV with header `n1,empirical,model`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let model = f_theta(&self.params);
        let freq = self.histogram.frequencies();
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["n1", "empirical", "model"])?;
        for (k, (e, m)) in freq.iter().zip(model.probs()).enumerate() {
            out.write_record([k.to_string(), format!("{e:e}"), format!("{m:e}")])?;
        }
        out.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Fits the uniform-group model (`h = 0`) to a histogram by moments.
pub fn fit_histogram(histogram: EmpiricalDistribution) -> Result<RecordingFit> {
    let n = histogram.n_agents();
    let est = fit_moments(&histogram, n, 0.0)?;
    let params = ModelParams::new(n, est.alpha, est.beta, 0.0)?;
    let kl = kl_divergence(&histogram, &f_theta(&params))?;
    Ok(RecordingFit {
        params,
        kl,
        histogram,
    })
}

/// Maps a trace to counts and fits it.
pub fn fit_recording(trace: &EnergyTrace, cfg: &MetaAgentConfig) -> Result<RecordingFit> {
    fit_histogram(db_to_counts(trace, cfg)?)
}

/// Full per-file settings of the audio pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AudioConfig {
    pub frame: FrameConfig,
    pub clip_lo: f64,
    pub clip_hi: f64,
    pub segments: usize,
    pub meta: MetaAgentConfig,
}

impl Default for AudioConfig {
    fn default() -> Self {
        AudioConfig {
            frame: FrameConfig::default(),
            clip_lo: DEFAULT_CLIP_LO,
            clip_hi: DEFAULT_CLIP_HI,
            segments: DEFAULT_SEGMENTS,
            meta: MetaAgentConfig::default(),
        }
    }
}

/// Everything the pipeline derives from one recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingAnalysis {
    pub trace: EnergyTrace,
    pub stability: f64,
    pub fit: RecordingFit,
}

/// Energy trace, outlier clip, stability and fit of already-decoded audio.
pub fn analyze_samples(audio: &MonoAudio, cfg: &AudioConfig) -> Result<RecordingAnalysis> {
    let raw = frame_energies(&audio.samples, audio.sample_rate, &cfg.frame)?;
    let trace = remove_outliers(&raw, cfg.clip_lo, cfg.clip_hi)?;
    let stability = segment_stability(&trace, cfg.segments)?;
    let fit = fit_recording(&trace, &cfg.meta)?;
    Ok(RecordingAnalysis {
        trace,
        stability,
        fit,
    })
}

pub fn analyze_file(path: &Path, cfg: &AudioConfig) -> Result<RecordingAnalysis> {
    analyze_samples(&read_wav(path)?, cfg)
}
