use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;
use meanfield::commands::{self, Command};
use meanfield::config::{ExperimentConfig, Format};
use meanfield::parallel;

const OUTPUT_HELP: &str = "\
OUTPUT FILES (written to --out; floats in CSV use 17 significant digits)
  <command>.json / <command>_summary.csv
      summary with schema_version, command, passed and named check verdicts
  sample      covariance.csv  i,j,mean_i,covariance,standard_error
              samples.csv     step,time,particle,coord_0..coord_{d-1}  (sample.dump = true)
  invariant   history.csv     iteration,residual_l1,w1_step,factor
              measure.csv     x_center,density[,density_1,...]  (one column per fixed point)
  evolve      trace.csv       t,H_W,I_W,W2,E_f,lsi_check,t2_check,decay_check,mean,variance
  chaos       chaos.csv       n,replicas,samples,w2,noise_floor
  verify      verify.csv      criterion,title,passed,detail
  sweep       sweep.csv       one row per point: the swept keys in axis order,
                              then passed, then the summary keys in sorted order
  constants   summary only

EXIT STATUS
  0 all checks passed, 1 a bound check failed, 2 invalid input or runtime error";

/// Numerical experiments for mean-field particle systems and their McKean-Vlasov limit.
#[derive(Debug, Parser)]
#[command(name = "meanfield", version, after_help = OUTPUT_HELP)]
struct Cli {
    /// What to run.
    #[arg(value_enum)]
    command: Command,
    /// TOML configuration; every key has a default.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Random seed; overrides `seed` in the config.
    #[arg(long, env = "MEANFIELD_SEED")]
    seed: Option<u64>,
    /// Worker threads; overrides `workers` in the config.
    #[arg(long, env = "MEANFIELD_WORKERS")]
    workers: Option<usize>,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Summary format; overrides `output.format`.
    #[arg(long, value_enum)]
    format: Option<Format>,
}

fn load(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    // Through the override path so sweep points inherit the flags.
    if let Some(seed) = cli.seed {
        let seed = i64::try_from(seed).context("--seed must fit in a signed 64-bit integer")?;
        cfg = cfg.with_override("seed", &toml::Value::Integer(seed))?;
    }
    if let Some(workers) = cli.workers {
        cfg = cfg.with_override("workers", &toml::Value::Integer(workers as i64))?;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<bool> {
    let cfg = load(cli)?;
    let report = parallel::pool(cfg.workers)?.install(|| commands::run(cli.command, &cfg))?;
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    let format = cli.format.unwrap_or(cfg.output.format);
    for path in report.write(&dir, format)? {
        eprintln!("wrote {}", path.display());
    }
    Ok(report.passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("meanfield: one or more checks failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("meanfield: {e:#}");
            ExitCode::from(2)
        }
    }
}
