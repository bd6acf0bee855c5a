use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cafe_theta::analytic::{exact_stationary, f_iso, f_theta, f_uni, uniform_kernel_matrix};
use cafe_theta::audio::{analyze_file, AudioConfig, FrameConfig, MetaAgentConfig, Window};
use cafe_theta::experiments::{
    heatmap, hmin_cell, run_parallel, silence_cell, simulate_cell, simulate_cell_with,
    write_rows_csv, Metadata, SweepSpec, WeightScheme, DEFAULT_STEPS, THETA_GRID,
};
use cafe_theta::fitting::{EmpiricalDistribution, FitReport};
use cafe_theta::weights::{make_cafe_weights, make_distance_weights, WeightMatrix};
use cafe_theta::{Error, ModelParams};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde::Serialize;

const EXIT_ARGUMENT: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_PARTIAL: u8 = 4;

#[derive(Parser)]
#[command(name = "cafe-theta", version, about = "Simulate and analyze the Café θ model of group silence")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate grid cells and compare histograms with the analytic law
    Simulate(SimulateArgs),
    /// Evaluate a stationary speaker-count distribution
    Analytic(AnalyticArgs),
    /// Analytic silence probability over a grid
    Heatmap(GridArgs),
    /// Fit a histogram or trajectory file
    Fit(FitArgs),
    /// Simulate and fit the interpolation weight for every cell
    SweepHmin(GridArgs),
    /// Measure silence durations against theory
    Silence(GridArgs),
    /// Energy traces, stability ranking and model fits for WAV recordings
    Audio(AudioArgs),
    /// Export or import interaction matrices
    #[command(subcommand)]
    Weights(WeightsCommand),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scheme {
    Cafe,
    Distance,
}

impl From<Scheme> for WeightScheme {
    fn from(s: Scheme) -> Self {
        match s {
            Scheme::Cafe => WeightScheme::Cafe,
            Scheme::Distance => WeightScheme::Distance,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum WindowArg {
    Hann,
    Rect,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Theta,
    Uni,
    Iso,
    Exact,
}

/// Accepts decimals or fractions such as `1/800`.
fn parse_real(s: &str) -> Result<f64, String> {
    let value = match s.split_once('/') {
        Some((num, den)) => {
            let num: f64 = num.trim().parse().map_err(|_| format!("bad number {s:?}"))?;
            let den: f64 = den.trim().parse().map_err(|_| format!("bad number {s:?}"))?;
            num / den
        }
        None => s.trim().parse().map_err(|_| format!("bad number {s:?}"))?,
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(format!("{s:?} is not finite"))
    }
}

#[derive(Args, Clone)]
struct OutputArgs {
    /// Output file; standard output when omitted
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Args, Clone)]
struct GridArgs {
    /// Group sizes
    #[arg(long = "n", num_args = 1.., default_values_t = [64usize])]
    n: Vec<usize>,
    /// Start rates
    #[arg(long, num_args = 1.., value_parser = parse_real, default_values_t = [1.0 / 800.0])]
    alpha: Vec<f64>,
    /// Stop rates; each cell uses beta = alpha when omitted
    #[arg(long, num_args = 1.., value_parser = parse_real)]
    beta: Vec<f64>,
    /// Self-weights; defaults to the full simulation grid for sweeps
    #[arg(long, num_args = 1.., value_parser = parse_real)]
    theta: Vec<f64>,
    /// Retained steps per cell
    #[arg(long, default_value_t = DEFAULT_STEPS)]
    steps: u64,
    /// Discarded initial steps; defaults to 10 max(1/alpha, 1/beta)
    #[arg(long)]
    burn_in: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Replicates per cell
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    #[arg(long, value_enum, default_value = "cafe")]
    weights: Scheme,
    /// Worker threads
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[command(flatten)]
    output: OutputArgs,
}

impl GridArgs {
    fn spec(&self, default_thetas: &[f64]) -> cafe_theta::Result<SweepSpec> {
        let spec = SweepSpec {
            n_values: self.n.clone(),
            alpha_values: self.alpha.clone(),
            beta_values: self.beta.clone(),
            theta_values: if self.theta.is_empty() {
                default_thetas.to_vec()
            } else {
                self.theta.clone()
            },
            steps: self.steps,
            burn_in: self.burn_in,
            seed: self.seed,
            seeds_per_cell: self.seeds,
            weights: self.weights.into(),
            cross_beta: !self.beta.is_empty(),
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    grid: GridArgs,
    /// Interaction matrix CSV used instead of generated weights
    #[arg(long)]
    weights_file: Option<PathBuf>,
    /// Directory receiving the per-cell `t,n1` trajectories
    #[arg(long)]
    trajectory_dir: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyticArgs {
    #[arg(long = "n")]
    n: usize,
    #[arg(long, value_parser = parse_real)]
    alpha: f64,
    #[arg(long, value_parser = parse_real)]
    beta: Option<f64>,
    #[arg(long, value_parser = parse_real, default_value_t = 0.0)]
    theta: f64,
    /// Which distribution to evaluate
    #[arg(long, value_enum, default_value = "theta")]
    kind: Kind,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct FitArgs {
    /// Histogram CSV (`n1,count`) or trajectory CSV (`t,n1`)
    #[arg(long)]
    input: PathBuf,
    /// Group size; inferred from a histogram when omitted
    #[arg(long = "n")]
    n: Option<usize>,
    #[arg(long, value_parser = parse_real)]
    alpha: f64,
    #[arg(long, value_parser = parse_real)]
    beta: Option<f64>,
    #[arg(long, value_parser = parse_real, default_value_t = 0.0)]
    theta: f64,
    /// Interpolation weight held fixed for the moment fit
    #[arg(long, value_parser = parse_real, default_value_t = 0.0)]
    moment_h: f64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Args)]
struct AudioArgs {
    /// WAV recordings
    #[arg(required = true)]
    paths: Vec<PathBuf>,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 512)]
    frame: usize,
    #[arg(long, default_value_t = 256)]
    hop: usize,
    #[arg(long, value_enum, default_value = "hann")]
    window: WindowArg,
    /// Lower clip percentile
    #[arg(long, default_value_t = 0.1)]
    clip_lo: f64,
    /// Upper clip percentile
    #[arg(long, default_value_t = 99.9)]
    clip_hi: f64,
    #[arg(long, default_value_t = 4)]
    parents: usize,
    /// Sub-agents per parent
    #[arg(long, default_value_t = 8)]
    sub_agents: usize,
    /// Segments for the stability score
    #[arg(long, default_value_t = 10)]
    segments: usize,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Subcommand)]
enum WeightsCommand {
    /// Write a generated matrix as CSV
    Export {
        #[arg(long = "n")]
        n: usize,
        #[arg(long, value_parser = parse_real)]
        theta: f64,
        #[arg(long, value_enum, default_value = "cafe")]
        weights: Scheme,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Validate a matrix CSV and describe it
    Import {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug)]
enum Failure {
    Argument(String),
    Data(String),
    Partial(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter(_) => Failure::Argument(e.to_string()),
            other => Failure::Data(other.to_string()),
        }
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

type CliResult = Result<(), Failure>;

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn io_failure(path: Option<&Path>, e: io::Error) -> Failure {
    match path {
        Some(p) => Failure::Data(format!("{}: {e}", p.display())),
        None => Failure::Data(e.to_string()),
    }
}

/// Writes rows in the requested format, plus a sidecar when writing a file.
fn emit<R: Serialize>(output: &OutputArgs, rows: &[R], meta: &Metadata) -> CliResult {
    let write = |w: &mut dyn Write| -> CliResult {
        match output.format {
            Format::Csv => write_rows_csv(&mut *w, rows)?,
            Format::Json => {
                serde_json::to_writer_pretty(&mut *w, rows)?;
                writeln!(w).map_err(|e| io_failure(output.out.as_deref(), e))?;
            }
        }
        w.flush().map_err(|e| io_failure(output.out.as_deref(), e))
    };
    match &output.out {
        Some(path) => {
            write(&mut create(path)?)?;
            meta.write_for(path)?;
        }
        None => write(&mut io::stdout().lock())?,
    }
    Ok(())
}

fn echo<T: Serialize>(value: &T) -> serde_json::Value {
    serde_json::to_value(value).unwrap_or(serde_json::Value::Null)
}

fn run_simulate(args: &SimulateArgs) -> CliResult {
    let spec = args.grid.spec(&[0.0])?;
    let cells = spec.cells()?;
    let custom = match &args.weights_file {
        Some(path) => {
            let w = WeightMatrix::load(path)?;
            if spec.n_values.iter().any(|&n| n != w.n()) {
                return Err(Failure::Argument(format!(
                    "weights file has {} agents but the grid asks for {:?}",
                    w.n(),
                    spec.n_values
                )));
            }
            Some(w)
        }
        None => None,
    };
    info!("simulating {} cells", cells.len());
    let results = run_parallel(args.grid.jobs, &cells, |cell| match &custom {
        Some(w) => simulate_cell_with(cell, w, &spec),
        None => simulate_cell(cell, &spec),
    });
    let results = results.into_iter().collect::<Result<Vec<_>, _>>()?;

    if let Some(dir) = &args.trajectory_dir {
        std::fs::create_dir_all(dir).map_err(|e| io_failure(Some(dir), e))?;
        for (i, cell) in cells.iter().enumerate() {
            let weights = match &custom {
                Some(w) => w.clone(),
                None => cafe_theta::experiments::cell_weights(cell, spec.weights)?,
            };
            let traj = cafe_theta::engine::simulate(&cell.params, &weights, &spec.sim_config(cell.seed))?;
            let path = dir.join(format!("trajectory_{i:04}.csv"));
            traj.save_counts(&path)?;
            Metadata::new("simulate", Some(cell.seed), echo(cell)).write_for(&path)?;
        }
    }

    let meta = Metadata::new("simulate", Some(spec.seed), echo(&spec));
    match args.grid.output.format {
        Format::Csv => {
            let rows: Vec<_> = results.iter().flat_map(|r| r.rows()).collect();
            emit(&args.grid.output, &rows, &meta)
        }
        Format::Json => emit(&args.grid.output, &results, &meta),
    }
}

#[derive(Serialize)]
struct ProbRow {
    n1: usize,
    prob: f64,
}

fn run_analytic(args: &AnalyticArgs) -> CliResult {
    let params = ModelParams::new(args.n, args.alpha, args.beta.unwrap_or(args.alpha), args.theta)?;
    let dist = match args.kind {
        Kind::Theta => f_theta(&params),
        Kind::Uni => f_uni(&params),
        Kind::Iso => f_iso(&params),
        Kind::Exact => exact_stationary(&uniform_kernel_matrix(&params))?,
    };
    let rows: Vec<ProbRow> = dist
        .probs()
        .iter()
        .enumerate()
        .map(|(n1, &prob)| ProbRow { n1, prob })
        .collect();
    emit(&args.output, &rows, &Metadata::new("analytic", None, echo(&params)))
}

fn run_heatmap(args: &GridArgs) -> CliResult {
    let spec = args.spec(&THETA_GRID)?;
    let rows = heatmap(&spec)?;
    emit(&args.output, &rows, &Metadata::new("heatmap", None, echo(&spec)))
}

fn run_sweep_hmin(args: &GridArgs) -> CliResult {
    let spec = args.spec(&THETA_GRID)?;
    let cells = spec.cells()?;
    info!("fitting {} cells", cells.len());
    let rows = run_parallel(args.jobs, &cells, |c| hmin_cell(c, &spec))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    emit(&args.output, &rows, &Metadata::new("sweep-hmin", Some(spec.seed), echo(&spec)))
}

fn run_silence(args: &GridArgs) -> CliResult {
    let spec = args.spec(&[0.0])?;
    let cells = spec.cells()?;
    let rows = run_parallel(args.jobs, &cells, |c| silence_cell(c, &spec))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    for r in rows.iter().filter(|r| r.n_observed == 0) {
        warn!("no complete silence observed for N={}, alpha={}, theta={}", r.n, r.alpha, r.theta);
    }
    emit(&args.output, &rows, &Metadata::new("silence", Some(spec.seed), echo(&spec)))
}

/// Reads either a `n1,count` histogram or a `t,n1` trajectory.
fn read_histogram(path: &Path, n: Option<usize>) -> Result<EmpiricalDistribution, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| io_failure(Some(path), e))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().unwrap_or("").trim().to_string();
    let pairs = lines
        .map(|l| {
            let mut it = l.split(',').map(str::trim);
            let a = it.next().and_then(|x| x.parse::<u64>().ok());
            let b = it.next().and_then(|x| x.parse::<u64>().ok());
            a.zip(b)
                .ok_or_else(|| Failure::Data(format!("{}: malformed row {l:?}", path.display())))
        })
        .collect::<Result<Vec<_>, _>>()?;
    match header.as_str() {
        "n1,count" => {
            let mut counts = vec![0u64; pairs.len()];
            for (k, c) in pairs {
                let slot = counts
                    .get_mut(k as usize)
                    .ok_or_else(|| Failure::Data(format!("{}: bin {k} out of order", path.display())))?;
                *slot = c;
            }
            if let Some(n) = n {
                if counts.len() != n + 1 {
                    return Err(Failure::Data(format!(
                        "{}: histogram has {} bins, expected {}",
                        path.display(),
                        counts.len(),
                        n + 1
                    )));
                }
            }
            Ok(EmpiricalDistribution::from_counts(counts)?)
        }
        "t,n1" => {
            let n = n.ok_or_else(|| Failure::Argument("--n is required for trajectory input".into()))?;
            Ok(EmpiricalDistribution::from_values(n, pairs.into_iter().map(|(_, v)| v as usize))?)
        }
        other => Err(Failure::Data(format!(
            "{}: unrecognized header {other:?}",
            path.display()
        ))),
    }
}

#[derive(Serialize)]
struct FitRow {
    n: usize,
    alpha: f64,
    beta: f64,
    theta: f64,
    h_min: f64,
    kl_at_min: f64,
    alpha_hat: Option<f64>,
    beta_hat: Option<f64>,
}

fn run_fit(args: &FitArgs) -> CliResult {
    let emp = read_histogram(&args.input, args.n)?;
    let params = ModelParams::new(emp.n_agents(), args.alpha, args.beta.unwrap_or(args.alpha), args.theta)?;
    let report = FitReport::build(&emp, &params, args.moment_h)?;
    let meta = Metadata::new("fit", None, echo(&params));
    let output = OutputArgs {
        out: args.out.clone(),
        format: args.format,
    };
    match args.format {
        Format::Json => {
            let text = serde_json::to_string_pretty(&report)?;
            match &args.out {
                Some(path) => {
                    std::fs::write(path, text + "\n").map_err(|e| io_failure(Some(path), e))?;
                    meta.write_for(path)?;
                }
                None => println!("{text}"),
            }
            Ok(())
        }
        Format::Csv => {
            let row = FitRow {
                n: params.n_agents(),
                alpha: params.alpha(),
                beta: params.beta(),
                theta: params.theta(),
                h_min: report.h_min,
                kl_at_min: report.kl_at_min,
                alpha_hat: report.alpha_hat,
                beta_hat: report.beta_hat,
            };
            emit(&output, &[row], &meta)
        }
    }
}

#[derive(Serialize)]
struct RankRow {
    file: String,
    variance_of_min_db: f64,
}

fn run_audio(args: &AudioArgs) -> CliResult {
    let cfg = AudioConfig {
        frame: FrameConfig {
            frame_len: args.frame,
            hop_len: args.hop,
            window: match args.window {
                WindowArg::Hann => Window::Hann,
                WindowArg::Rect => Window::Rect,
            },
        },
        clip_lo: args.clip_lo,
        clip_hi: args.clip_hi,
        segments: args.segments,
        meta: MetaAgentConfig::new(args.parents, args.sub_agents)?,
    };
    std::fs::create_dir_all(&args.out).map_err(|e| io_failure(Some(&args.out), e))?;
    let results = run_parallel(args.jobs, &args.paths, |p| analyze_file(p, &cfg));

    let mut ranking = Vec::new();
    let mut failures = 0;
    for (path, result) in args.paths.iter().zip(results) {
        let analysis = match result {
            Ok(a) => a,
            Err(e @ (Error::Io { .. } | Error::Format { .. })) => {
                eprintln!("error: {e}");
                failures += 1;
                continue;
            }
            Err(e) => {
                eprintln!("error: {}: {e}", path.display());
                failures += 1;
                continue;
            }
        };
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "recording".into());
        let file_meta = Metadata::new("audio", None, serde_json::json!({ "file": path, "config": cfg }));
        let energy = args.out.join(format!("{stem}.energy.csv"));
        analysis.trace.write_csv(create(&energy)?)?;
        file_meta.write_for(&energy)?;
        let hist = args.out.join(format!("{stem}.fit.csv"));
        analysis.fit.write_csv(create(&hist)?)?;
        file_meta.write_for(&hist)?;
        let json = args.out.join(format!("{stem}.fit.json"));
        let report = serde_json::json!({
            "file": path,
            "params": analysis.fit.params,
            "kl": analysis.fit.kl,
            "variance_of_min_db": analysis.stability,
            "frames": analysis.trace.len(),
            "dropped_zero_frames": analysis.trace.dropped_zero_frames,
            "clip_percentiles": [cfg.clip_lo, cfg.clip_hi],
        });
        std::fs::write(&json, serde_json::to_string_pretty(&report)? + "\n")
            .map_err(|e| io_failure(Some(&json), e))?;
        file_meta.write_for(&json)?;
        ranking.push(RankRow {
            file: path.display().to_string(),
            variance_of_min_db: analysis.stability,
        });
    }
    ranking.sort_by(|a, b| a.variance_of_min_db.total_cmp(&b.variance_of_min_db));
    let rank_path = args.out.join("ranking.csv");
    let output = OutputArgs {
        out: Some(rank_path),
        format: Format::Csv,
    };
    emit(&output, &ranking, &Metadata::new("audio", None, echo(&cfg)))?;

    match failures {
        0 => Ok(()),
        f if f == args.paths.len() => Err(Failure::Data("no recording could be processed".into())),
        f => Err(Failure::Partial(format!("{f} of {} recordings failed", args.paths.len()))),
    }
}

#[derive(Serialize)]
struct WeightsSummary {
    n: usize,
    cafe_theta: Option<f64>,
    min_row_sum: f64,
    max_row_sum: f64,
    min_diagonal: f64,
    max_diagonal: f64,
}

fn run_weights(cmd: &WeightsCommand) -> CliResult {
    match cmd {
        WeightsCommand::Export {
            n,
            theta,
            weights,
            seed,
            out,
        } => {
            let w = match weights {
                Scheme::Cafe => make_cafe_weights(*n, *theta)?,
                Scheme::Distance => make_distance_weights(*n, *theta, *seed)?.weights,
            };
            match out {
                Some(path) => {
                    w.save(path)?;
                    let params = serde_json::json!({ "n": n, "theta": theta, "scheme": WeightScheme::from(*weights) });
                    Metadata::new("weights export", Some(*seed), params).write_for(path)?;
                }
                None => w.write_csv(io::stdout().lock())?,
            }
            Ok(())
        }
        WeightsCommand::Import { input, out } => {
            let w = WeightMatrix::load(input)?;
            let n = w.n();
            let sums: Vec<f64> = (0..n).map(|i| w.row_sum(i)).collect();
            let diag: Vec<f64> = (0..n).map(|i| w.get(i, i)).collect();
            let fold = |v: &[f64], f: fn(f64, f64) -> f64, init: f64| v.iter().copied().fold(init, f);
            let summary = WeightsSummary {
                n,
                cafe_theta: w.cafe_theta(),
                min_row_sum: fold(&sums, f64::min, f64::INFINITY),
                max_row_sum: fold(&sums, f64::max, f64::NEG_INFINITY),
                min_diagonal: fold(&diag, f64::min, f64::INFINITY),
                max_diagonal: fold(&diag, f64::max, f64::NEG_INFINITY),
            };
            let text = serde_json::to_string_pretty(&summary)?;
            match out {
                Some(path) => std::fs::write(path, text + "\n").map_err(|e| io_failure(Some(path), e)),
                None => {
                    println!("{text}");
                    Ok(())
                }
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => run_simulate(a),
        Command::Analytic(a) => run_analytic(a),
        Command::Heatmap(a) => run_heatmap(a),
        Command::Fit(a) => run_fit(a),
        Command::SweepHmin(a) => run_sweep_hmin(a),
        Command::Silence(a) => run_silence(a),
        Command::Audio(a) => run_audio(a),
        Command::Weights(c) => run_weights(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Argument(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_ARGUMENT)
        }
        Err(Failure::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_DATA)
        }
        Err(Failure::Partial(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_PARTIAL)
        }
    }
}
