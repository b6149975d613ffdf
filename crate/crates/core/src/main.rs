use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use peerfx::acceptance::{self, AcceptOptions};
use peerfx::config::RunConfig;
use peerfx::model::ProgramType;
use peerfx::pipeline;
use peerfx::suite::SpecName;
use peerfx::{Error, Result};

const ACCEPTANCE_FAILED: u8 = 4;

#[derive(Parser)]
#[command(
    name = "peerfx",
    version,
    about = "Peer effects in training courses: synthetic data, scoring, estimation and validity checks",
    after_help = "Settings are resolved as flags > config file > built-in defaults.\n\
                  Exit codes: 0 success, 1 usage or config, 2 data, 3 numerical failure, 4 acceptance failure."
)]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on this.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory; must exist.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Input directory; defaults to the output directory.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Draw a synthetic dataset and its ground truth.
    Synth,
    /// Match, check balance and attach employability scores.
    Score,
    /// Run estimation specifications.
    Estimate {
        /// Specification to run; repeatable. Replaces the configured list.
        #[arg(long = "spec")]
        specs: Vec<String>,
        #[arg(long = "outcome")]
        outcomes: Vec<String>,
        #[arg(long = "program-type")]
        program_types: Vec<String>,
    },
    /// Resampling test, exclusion-bias test, sorting screens, variance decomposition.
    Validate {
        #[arg(long)]
        n_sims: Option<usize>,
    },
    /// synth, score, estimate and validate in sequence.
    Run,
    /// Run the acceptance suite; exits 4 if any criterion fails.
    Accept {
        /// Ground truth to test recovery against instead of the generator's own.
        #[arg(long)]
        ground_truth: Option<PathBuf>,
        /// Run only these criteria (comma separated ids).
        #[arg(long, value_delimiter = ',')]
        only: Vec<u8>,
        /// Replications for the recovery and null-size criteria.
        #[arg(long)]
        reps: Option<usize>,
    },
}

fn parse_all<T: std::str::FromStr>(items: &[String]) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    items.iter().map(|s| s.parse::<T>().map_err(|e| Error::Usage(e.to_string()))).collect()
}

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.paths.out_dir = o.clone();
    }
    if let Some(d) = &cli.data {
        cfg.paths.data_dir = Some(d.clone());
    }
    match &cli.cmd {
        Cmd::Estimate { specs, outcomes, program_types } => {
            if !specs.is_empty() {
                cfg.estimation.specs = parse_all::<SpecName>(specs)?;
            }
            if !outcomes.is_empty() {
                cfg.estimation.outcomes = outcomes.clone();
            }
            if !program_types.is_empty() {
                cfg.estimation.program_types = parse_all::<ProgramType>(program_types)?;
            }
        }
        Cmd::Validate { n_sims: Some(n) } => cfg.validity.n_sims = *n,
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn accept(cfg: &RunConfig, ground_truth: Option<&PathBuf>, only: &[u8], reps: Option<usize>) -> Result<bool> {
    let out = &cfg.paths.out_dir;
    if !out.is_dir() {
        return Err(Error::Config(format!("output directory {} does not exist", out.display())));
    }
    let mut opts = AcceptOptions {
        seed: cfg.seed,
        dgp: cfg.dgp.clone().unwrap_or_default(),
        work_dir: out.join("acceptance_work"),
        only: only.to_vec(),
        ..AcceptOptions::default()
    };
    if let Some(r) = reps {
        opts.recovery_reps = r;
        opts.null_reps = r;
    }
    if let Some(p) = ground_truth {
        opts.truth_theta = Some(pipeline::read_ground_truth(p)?.theta);
    }
    let results = acceptance::run(&opts);
    for c in &results {
        println!("{}", c.line());
    }
    #[derive(serde::Serialize)]
    struct Summary<'a> {
        config_hash: String,
        seed: u64,
        passed: bool,
        criteria: &'a [acceptance::Criterion],
    }
    let passed = results.iter().all(|c| c.passed);
    // timings vary between runs, so they stay on stdout only
    let stable: Vec<_> = results.iter().cloned().map(|c| acceptance::Criterion { seconds: 0.0, ..c }).collect();
    peerfx::io::write_json(
        &Summary { config_hash: cfg.hash(), seed: cfg.seed, passed, criteria: &stable },
        &out.join("acceptance.json"),
    )?;
    Ok(passed)
}

fn run(cli: &Cli) -> Result<ExitCode> {
    let cfg = resolve(cli)?;
    if let Some(j) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build_global()
            .map_err(|e| Error::Usage(format!("--jobs: {e}")))?;
    }
    let written = match &cli.cmd {
        Cmd::Synth => pipeline::cmd_synth(&cfg)?,
        Cmd::Score => pipeline::cmd_score(&cfg)?,
        Cmd::Estimate { .. } => pipeline::cmd_estimate(&cfg)?,
        Cmd::Validate { .. } => pipeline::cmd_validate(&cfg)?,
        Cmd::Run => pipeline::run_all(&cfg)?,
        Cmd::Accept { ground_truth, only, reps } => {
            let ok = accept(&cfg, ground_truth.as_ref(), only, *reps)?;
            return Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(ACCEPTANCE_FAILED) });
        }
    };
    for p in written {
        println!("{}", p.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
