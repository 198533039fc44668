use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use krr_bench::bench::{report_bounds, run_benchmark, Record};
use krr_bench::config::RunConfig;
use krr_bench::ingest::load_dataset;
use krr_core::datagen::{gen_em_field, write_em_csv};
use krr_core::Result;

#[derive(Parser)]
#[command(
    name = "krr-bench",
    version,
    about = "Gaussian kernel ridge regression benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the point-charge potential dataset as CSV.
    GenEm {
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        #[arg(long, default_value_t = 5)]
        charges: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse a dataset and print its shape and column ranges.
    IngestCheck(RunFlags),
    /// Solve with the first preconditioner and sampler of the configuration.
    Solve(RunFlags),
    /// Solve under every configured preconditioner and sampler.
    Bench(RunFlags),
    /// Print gamma, the required rank and the numerical rank for a dataset.
    Bounds {
        #[command(flatten)]
        run: RunFlags,
        /// Target condition number.
        #[arg(long, default_value_t = 2.0)]
        xi: f64,
    },
}

#[derive(Args, Default)]
struct RunFlags {
    /// `key = value` configuration file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV path, or em:<n> for generated data.
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    label: Option<String>,
    /// Comma-separated feature columns.
    #[arg(long)]
    features: Option<String>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    rank: Option<usize>,
    /// Sketch size l.
    #[arg(long)]
    oversample: Option<usize>,
    /// id, random or fps; comma-separated for several.
    #[arg(long)]
    sampler: Option<String>,
    /// nystrom or none; comma-separated for several.
    #[arg(long)]
    precond: Option<String>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    fgt_delta: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    dense_cap: Option<usize>,
    #[arg(long)]
    standardize: bool,
    #[arg(long)]
    cond_probes: Option<usize>,
    /// JSONL output; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunFlags {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        let pairs: [(&str, Option<String>); 16] = [
            ("dataset", self.dataset.clone()),
            ("label", self.label.clone()),
            ("features", self.features.clone()),
            ("epsilon", self.epsilon.map(|v| v.to_string())),
            ("beta", self.beta.map(|v| v.to_string())),
            ("rank", self.rank.map(|v| v.to_string())),
            ("oversample", self.oversample.map(|v| v.to_string())),
            ("sampler", self.sampler.clone()),
            ("precond", self.precond.clone()),
            ("tol", self.tol.map(|v| v.to_string())),
            ("max_iters", self.max_iters.map(|v| v.to_string())),
            ("fgt_delta", self.fgt_delta.map(|v| v.to_string())),
            ("seed", self.seed.map(|v| v.to_string())),
            ("dense_cap", self.dense_cap.map(|v| v.to_string())),
            ("cond_probes", self.cond_probes.map(|v| v.to_string())),
            ("out", self.out.as_ref().map(|p| p.display().to_string())),
        ];
        for (key, value) in pairs {
            if let Some(v) = value {
                cfg.set(key, &v)?;
            }
        }
        if self.standardize {
            cfg.standardize = true;
        }
        Ok(cfg)
    }
}

fn open_out(path: Option<&PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenEm {
            n,
            charges,
            seed,
            out,
        } => {
            let data = gen_em_field(n, charges, seed)?;
            write_em_csv(&data, open_out(out.as_ref())?)?;
            if data.resampled > 0 {
                eprintln!("{} samples redrawn for landing on a charge", data.resampled);
            }
        }
        Command::IngestCheck(flags) => {
            let cfg = flags.resolve()?;
            let data = load_dataset(&cfg)?;
            let bbox = data.points.bounding_box();
            let report = serde_json::json!({
                "n": data.points.len(),
                "d": data.points.dim(),
                "features": data.features,
                "label": data.label,
                "box_min": bbox.min,
                "box_max": bbox.max,
                "label_min": data.labels.iter().cloned().fold(f64::INFINITY, f64::min),
                "label_max": data.labels.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                "standardization": data.standardization,
            });
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Solve(flags) => {
            let mut cfg = flags.resolve()?;
            cfg.precond.truncate(1);
            cfg.sampler.truncate(1);
            bench_with_error_record(&cfg)?;
        }
        Command::Bench(flags) => {
            let cfg = flags.resolve()?;
            bench_with_error_record(&cfg)?;
        }
        Command::Bounds { run, xi } => {
            let cfg = run.resolve()?;
            let data = load_dataset(&cfg)?;
            let report = report_bounds(&data.points, cfg.epsilon, cfg.beta, xi, cfg.dense_cap)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
    }
    Ok(())
}

/// Runs the benchmark; a failure before or during the run is also written
/// to the log as an `error` record.
fn bench_with_error_record(cfg: &RunConfig) -> Result<()> {
    let mut out = open_out(cfg.out.as_ref())?;
    let result = run_benchmark(cfg, &mut out);
    if let Err(e) = &result {
        let rec = Record::Error {
            config_id: "run".into(),
            message: e.to_string(),
        };
        serde_json::to_writer(&mut out, &rec)?;
        writeln!(out)?;
        out.flush()?;
    }
    let summaries = result?;
    for s in &summaries {
        eprintln!(
            "{:<14} iterations {:>5}  converged {:<5}  rel. residual {:.2e}  {:.2}s",
            s.config_id, s.iterations, s.converged, s.final_relative_residual, s.total_seconds
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
