use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use dhsqr_harness::config::{ExperimentConfig, Method, Model, Noise};
use dhsqr_harness::grid::{pool_size, run_experiment_grid};
use dhsqr_harness::output::{summarize, write_all};
use dhsqr_harness::verify::{run_all, VerifyOptions};

/// Distributed high-dimensional sparse quantile regression experiments.
///
/// DHSQR_THREADS caps the worker pool. Exit status is 0 only when every run
/// completes (or every criterion passes), 1 otherwise and 2 on bad input.
#[derive(Parser)]
#[command(name = "dhsqr", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment grid described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's output_dir.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Run one cell and print its summary.
    Demo {
        #[arg(long, value_enum, default_value = "het")]
        model: ModelArg,
        #[arg(long, value_enum, default_value = "normal")]
        noise: NoiseArg,
        #[arg(long, default_value_t = 0.5)]
        tau: f64,
        /// Total training sample size.
        #[arg(long = "N", default_value_t = 20_000)]
        n_total: usize,
        /// Rows per machine.
        #[arg(long = "n", default_value_t = 500)]
        n_local: usize,
        /// Iterations.
        #[arg(long = "T", default_value_t = 10)]
        iterations: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 500)]
        p: usize,
        #[arg(long, default_value_t = 1)]
        replicates: usize,
        #[arg(long, value_enum, value_delimiter = ',', default_value = "dhsqr")]
        methods: Vec<MethodArg>,
        /// Also write CSV/JSON output here.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Run the acceptance criteria and print one line per criterion.
    Verify {
        /// Only the property and oracle checks (criteria 1-7).
        #[arg(long)]
        fast: bool,
        #[arg(long, default_value_t = 10)]
        replicates: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Hom,
    Het,
}

#[derive(Clone, Copy, ValueEnum)]
enum NoiseArg {
    Normal,
    T3,
    Cauchy,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Dhsqr,
    #[value(name = "avg_dc")]
    AvgDc,
    Pooled,
}

impl From<ModelArg> for Model {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Hom => Model::Homoscedastic,
            ModelArg::Het => Model::Heteroscedastic,
        }
    }
}

impl From<NoiseArg> for Noise {
    fn from(n: NoiseArg) -> Self {
        match n {
            NoiseArg::Normal => Noise::Normal,
            NoiseArg::T3 => Noise::T3,
            NoiseArg::Cauchy => Noise::Cauchy,
        }
    }
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Dhsqr => Method::Dhsqr,
            MethodArg::AvgDc => Method::AvgDc,
            MethodArg::Pooled => Method::Pooled,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run { config, output_dir } => run(config, output_dir),
        Command::Demo {
            model,
            noise,
            tau,
            n_total,
            n_local,
            iterations,
            seed,
            p,
            replicates,
            methods,
            output_dir,
        } => {
            let cfg = ExperimentConfig {
                models: vec![model.into()],
                noises: vec![noise.into()],
                taus: vec![tau],
                n_total: vec![n_total],
                n_local: vec![n_local],
                p,
                iterations,
                replicates,
                seed,
                methods: methods.into_iter().map(Method::from).collect(),
                output_dir,
                ..ExperimentConfig::default()
            };
            execute(cfg)
        }
        Command::Verify {
            fast,
            replicates,
            seed,
        } => Ok(verify(VerifyOptions {
            replicates,
            seed,
            fast,
        })),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(path: PathBuf, output_dir: Option<PathBuf>) -> anyhow::Result<bool> {
    let text =
        std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let mut cfg = ExperimentConfig::from_json(&text)
        .with_context(|| format!("parsing {}", path.display()))?;
    if output_dir.is_some() {
        cfg.output_dir = output_dir;
    }
    if cfg.output_dir.is_none() {
        cfg.output_dir = Some(PathBuf::from("out"));
    }
    execute(cfg)
}

fn execute(cfg: ExperimentConfig) -> anyhow::Result<bool> {
    cfg.validate()?;
    log::info!(
        "{} cells x {} replicates on {} threads",
        cfg.cells().len(),
        cfg.replicates,
        pool_size(&cfg)
    );
    let clock = Instant::now();
    let out = run_experiment_grid(&cfg)?;
    let wall = clock.elapsed().as_secs_f64();

    println!(
        "{:<7} {:>4} {:>4} {:<7} {:>5} {:>6} {:>4} {:>10} {:>10} {:>7} {:>7}",
        "method", "cell", "model", "noise", "tau", "N", "n", "l2 mean", "l2 sd", "F1", "F1 sd"
    );
    let summary = summarize(&out.records);
    for row in summary.iter().filter(|s| s.metric == "l2_error") {
        let f1 = summary
            .iter()
            .find(|s| s.metric == "f1" && s.cell == row.cell && s.method == row.method)
            .expect("every group has an f1 row");
        println!(
            "{:<7} {:>4} {:>4} {:<7} {:>5} {:>6} {:>4} {:>10.5} {:>10.5} {:>7.3} {:>7.3}",
            row.method.label(),
            row.cell,
            row.model.label(),
            row.noise.label(),
            row.tau,
            row.n_total,
            row.n_local,
            row.mean,
            row.sd,
            f1.mean,
            f1.sd
        );
    }
    if let Some(dir) = &cfg.output_dir {
        for path in write_all(dir, &cfg, &out, wall)? {
            log::info!("wrote {}", path.display());
        }
    }
    let failed: Vec<_> = out.records.iter().filter(|r| r.error.is_some()).collect();
    for r in &failed {
        log::error!(
            "{} cell {} replicate {}: {}",
            r.method.label(),
            r.cell,
            r.replicate,
            r.error.as_deref().unwrap_or_default()
        );
    }
    println!(
        "{} runs in {wall:.1}s, {} failed",
        out.records.len(),
        failed.len()
    );
    Ok(failed.is_empty())
}

fn verify(opts: VerifyOptions) -> bool {
    let results = run_all(opts, |r| println!("{r}"));
    let passed = results.iter().filter(|r| r.passed).count();
    println!("{passed}/{} criteria passed", results.len());
    passed == results.len()
}
