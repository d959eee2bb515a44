//! Command-line front end for the noisygrpo library: advantage estimation
//! over JSONL rollout groups, full training runs, residual diagnostics,
//! and standalone tensor noising.

mod commands;
mod config;
mod tensor;
mod wire;

use clap::{Parser, Subcommand, ValueEnum};
use noisygrpo::advantage::EstimatorMode;
use noisygrpo::diagnostics::ResidualKind;
use std::io::Write;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "noisygrpo", about = "Noise-as-prior policy optimization toolkit")]
struct Cli {
    /// Seed override: replaces the config seed for train, seeds the
    /// subsampler for diagnose, and seeds the noise draw (default 0).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Suppress progress chatter on stderr.
    #[arg(long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate advantages for JSONL rollout groups, one report per line.
    Advantages {
        /// Input JSONL file; each line holds {"group_id", "rollouts": [...]}.
        input: PathBuf,
        /// Prior variance of the semantic reward channel.
        #[arg(long, default_value_t = 0.1)]
        alpha: f64,
        /// Noise-variance scale for the observation channel.
        #[arg(long, default_value_t = 0.01)]
        gamma: f64,
        /// Estimator variant.
        #[arg(long, value_enum, default_value_t = ModeArg::Full)]
        mode: ModeArg,
    },
    /// Run a training experiment described by a key = value config file.
    Train {
        /// Config file path.
        config: PathBuf,
        /// Directory for metrics.csv, metrics.json, advantages.jsonl,
        /// and policy.json (created if missing).
        out_dir: PathBuf,
    },
    /// Pool residuals from an advantage log and test them for normality.
    Diagnose {
        /// Advantage log (JSONL from `train` or `advantages`).
        input: PathBuf,
        /// Which residual to pool.
        #[arg(long, value_enum, default_value_t = KindArg::ObsMinusPrior)]
        kind: KindArg,
        /// Optional directory for qq.csv, histogram.csv, and deciles.csv.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Histogram bin count.
        #[arg(long, default_value_t = 20)]
        bins: usize,
    },
    /// Apply forward noising to an NGT1 tensor file.
    Noise {
        /// Input tensor path.
        input: PathBuf,
        /// Output tensor path.
        output: PathBuf,
        /// Noise level in [0, 1].
        #[arg(long)]
        level: f64,
        /// Number of schedule steps.
        #[arg(long, default_value_t = 1000)]
        steps: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    /// Group-normalized rewards only.
    Vanilla,
    /// Equal-variance fusion of prior and observation.
    Naive,
    /// Variance-weighted fusion.
    Full,
}

impl From<ModeArg> for EstimatorMode {
    fn from(arg: ModeArg) -> Self {
        match arg {
            ModeArg::Vanilla => EstimatorMode::VanillaGrpo,
            ModeArg::Naive => EstimatorMode::NaiveNoisy,
            ModeArg::Full => EstimatorMode::FullNoisy,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    /// Observation-normalized minus prior-normalized rewards.
    ObsMinusPrior,
    /// Posterior minus observation-normalized rewards.
    PostMinusObs,
}

impl From<KindArg> for ResidualKind {
    fn from(arg: KindArg) -> Self {
        match arg {
            KindArg::ObsMinusPrior => ResidualKind::ObsMinusPrior,
            KindArg::PostMinusObs => ResidualKind::PostMinusObs,
        }
    }
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    let mut out = std::io::BufWriter::new(stdout.lock());
    match cli.command {
        Command::Advantages {
            input,
            alpha,
            gamma,
            mode,
        } => commands::cmd_advantages(&input, alpha, gamma, mode.into(), &mut out)?,
        Command::Train { config, out_dir } => {
            commands::cmd_train(&config, &out_dir, cli.seed, cli.quiet)?
        }
        Command::Diagnose {
            input,
            kind,
            out_dir,
            bins,
        } => commands::cmd_diagnose(
            &input,
            kind.into(),
            out_dir.as_deref(),
            bins,
            cli.seed.unwrap_or(0),
            &mut out,
        )?,
        Command::Noise {
            input,
            output,
            level,
            steps,
        } => commands::cmd_noise(
            &input,
            &output,
            level,
            steps,
            cli.seed.unwrap_or(0),
            cli.quiet,
        )?,
    }
    out.flush()?;
    Ok(())
}
