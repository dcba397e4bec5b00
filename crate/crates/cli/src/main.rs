use std::path::{Path, PathBuf};
use std::process::ExitCode;

use accelmc_cli::config::{parse_value, set_dotted};
use accelmc_cli::report::write_outputs;
use accelmc_cli::{run_experiment, ExperimentConfig, ResultRow, Summary};
use clap::{Args, Parser, Subcommand};

const OUT_ENV: &str = "ACCELMC_OUT_DIR";
const DEFAULT_OUT: &str = "accelmc-out";

#[derive(Parser)]
#[command(name = "accelmc", version, about = "Compare baseline and perturbed samplers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write results.csv and summary.json.
    Run(RunArgs),
    /// Run an experiment once per value of one parameter.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Dotted config key, e.g. `chain.cycle_budget`.
        #[arg(long)]
        param: String,
        /// Comma-separated values; an empty list runs nothing.
        #[arg(long, allow_hyphen_values = true)]
        values: String,
    },
    /// Parse and check a config file without running it.
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory. Falls back to the config, then $ACCELMC_OUT_DIR, then ./accelmc-out.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Multiplies every verdict tolerance.
    #[arg(long, default_value_t = 1.0)]
    tolerance_scale: f64,
}

enum Failure {
    Usage(String),
    Run(String),
}

fn load(args: &RunArgs) -> Result<ExperimentConfig, Failure> {
    let mut cfg = ExperimentConfig::load(&args.config).map_err(|e| Failure::Usage(e.to_string()))?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if !(args.tolerance_scale > 0.0) || !args.tolerance_scale.is_finite() {
        return Err(Failure::Usage("--tolerance-scale must be positive".into()));
    }
    if args.jobs == Some(0) {
        return Err(Failure::Usage("--jobs must be at least 1".into()));
    }
    Ok(cfg)
}

fn out_dir(args: &RunArgs, cfg: &ExperimentConfig) -> PathBuf {
    args.out
        .clone()
        .or_else(|| cfg.output.as_ref().map(PathBuf::from))
        .or_else(|| std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn in_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, Failure> {
    match jobs {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Failure::Run(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

fn execute(cfg: &ExperimentConfig, args: &RunArgs, artifacts: Option<&Path>) -> Result<Vec<ResultRow>, Failure> {
    let tol = cfg.tolerance.scaled(args.tolerance_scale);
    in_pool(args.jobs, || run_experiment(cfg, &tol, artifacts))?.map_err(|e| Failure::Run(e.to_string()))
}

fn finish(dir: &Path, cfg: &ExperimentConfig, rows: &[ResultRow]) -> Result<bool, Failure> {
    let summary = Summary::new(cfg.kind.as_str(), cfg.seed, rows);
    write_outputs(dir, rows, &summary).map_err(|e| Failure::Run(format!("writing {}: {e}", dir.display())))?;
    println!(
        "{}: {} pass, {} fail -> {}",
        cfg.kind.as_str(),
        summary.verdicts.pass,
        summary.verdicts.fail,
        dir.display()
    );
    for f in summary.failures.iter().take(20) {
        eprintln!("fail: {} {}", f.instance, f.criterion);
    }
    Ok(summary.all_pass())
}

fn run(args: &RunArgs) -> Result<bool, Failure> {
    let cfg = load(args)?;
    let dir = out_dir(args, &cfg);
    std::fs::create_dir_all(&dir).map_err(|e| Failure::Run(format!("creating {}: {e}", dir.display())))?;
    let rows = execute(&cfg, args, Some(&dir))?;
    finish(&dir, &cfg, &rows)
}

fn sweep(args: &RunArgs, param: &str, values: &str) -> Result<bool, Failure> {
    let cfg = load(args)?;
    let dir = out_dir(args, &cfg);
    let values: Vec<&str> = values.split(',').map(str::trim).filter(|v| !v.is_empty()).collect();
    // build every variant first so a bad value fails before any work is done
    let mut variants = Vec::with_capacity(values.len());
    for raw in &values {
        let mut doc = cfg.to_value();
        set_dotted(&mut doc, param, parse_value(raw)).map_err(|e| Failure::Usage(e.to_string()))?;
        let mut v = ExperimentConfig::from_value(doc).map_err(|e| Failure::Usage(format!("{param}={raw}: {e}")))?;
        if param != "seed" {
            v.seed = cfg.seed;
        }
        variants.push((raw, v));
    }
    let mut rows = Vec::new();
    for (raw, v) in &variants {
        for mut r in execute(v, args, None)? {
            r.instance = format!("{param}={raw}/{}", r.instance);
            rows.push(r);
        }
    }
    finish(&dir, &cfg, &rows)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => run(args),
        Command::Sweep { run: args, param, values } => sweep(args, param, values),
        Command::ValidateConfig { config } => match ExperimentConfig::load(config) {
            Ok(cfg) => {
                println!("ok: {} ({})", config.display(), cfg.kind.as_str());
                Ok(true)
            }
            Err(e) => Err(Failure::Usage(e.to_string())),
        },
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Usage(msg)) | Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
