use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use emac::diagnostics::DEFAULT_CADENCE;
use emac::harness::{self, Algo, RunConfig};

#[derive(Parser)]
#[command(name = "emac", about = "Episodic Memory Actor-Critic experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train over the configured seeds.
    Train(TrainArgs),
    /// One full run per value of a config field.
    Sweep {
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
    /// Train with overestimation measurements enabled.
    Diag {
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long, default_value_t = DEFAULT_CADENCE)]
        cadence: usize,
    },
}

#[derive(Args)]
struct TrainArgs {
    /// JSON config; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    env: Option<String>,
    #[arg(long)]
    algo: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    u: Option<usize>,
    /// Replaces the seed list; repeat or comma-separate for several.
    #[arg(long, value_delimiter = ',')]
    seed: Vec<u64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl TrainArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::from_file(path)
                .with_context(|| format!("reading config {}", path.display()))?,
            None => RunConfig::default(),
        };
        if let Some(env) = &self.env {
            c.env = env.clone();
        }
        if let Some(algo) = &self.algo {
            c.algo = match algo.as_str() {
                "emac" => Algo::Emac,
                "ddpg" => Algo::Ddpg,
                other => bail!("unknown algo {other:?}, expected emac or ddpg"),
            };
        }
        if let Some(alpha) = self.alpha {
            c.alpha = alpha;
        }
        if let Some(beta) = self.beta {
            c.beta = beta;
        }
        if let Some(u) = self.u {
            c.u = u;
        }
        if !self.seed.is_empty() {
            c.seeds = self.seed.clone();
        }
        if let Some(steps) = self.steps {
            c.total_steps = Some(steps);
        }
        Ok(c)
    }
}

fn train(config: &RunConfig, out: &Path) -> Result<()> {
    let (summary, _) = harness::run(config, out)?;
    for s in &summary.seeds {
        println!("seed {}: final score {}", s.seed, s.final_score);
    }
    println!(
        "mean {} std {} ({})",
        summary.mean,
        summary.std,
        out.display()
    );
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Train(args) => train(&args.load()?, &args.out),
        Command::Diag {
            train: args,
            cadence,
        } => {
            let mut c = args.load()?;
            c.diag_every = Some(cadence);
            train(&c, &args.out)
        }
        Command::Sweep {
            train: args,
            axis,
            values,
        } => {
            let rows = harness::sweep(&args.load()?, &axis, &values, &args.out)?;
            for r in rows {
                println!(
                    "{}={}: mean {} std {}",
                    axis, r.value, r.summary.mean, r.summary.std
                );
            }
            Ok(())
        }
    }
}
