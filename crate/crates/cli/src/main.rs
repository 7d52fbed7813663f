mod commands;
mod config;
mod error;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ssc_core::lowrank::RankPolicy;
use ssc_core::simgen::Model;

use crate::config::{BenchRunConfig, BootstrapRunConfig, CoxConfig, EstimateConfig, KmConfig, SimulateConfig};
use crate::error::CliResult;

#[derive(Debug, Parser)]
#[command(
    name = "ssc",
    version,
    about = "Synthetic survival control: counterfactual survival curves from censored panel data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic panel with its ground-truth survival curves.
    Simulate {
        #[command(flatten)]
        io: RunArgs,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_parser = parse_model)]
        model: Option<Model>,
        /// Observations per (period, unit) cell.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Counterfactual survival curve for the treated unit.
    Estimate {
        #[command(flatten)]
        io: RunArgs,
        #[command(flatten)]
        est: EstimateArgs,
    },
    /// Percentile band from donor-pool resampling.
    Bootstrap {
        #[command(flatten)]
        io: RunArgs,
        #[command(flatten)]
        est: EstimateArgs,
        /// Number of bootstrap replicates.
        #[arg(long)]
        b: Option<usize>,
        #[arg(long)]
        level: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Cox fit on every observation, with the optional plug-in marginal hazard.
    Cox {
        #[command(flatten)]
        io: RunArgs,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        target_unit: Option<String>,
        /// Also write the marginal counterfactual hazard of the target's post-period rows.
        #[arg(long)]
        marginal: bool,
    },
    /// Kaplan-Meier jump points for each cell.
    Km {
        #[command(flatten)]
        io: RunArgs,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        unit: Option<String>,
        /// Period code, 0 (pre) or 1 (post).
        #[arg(long)]
        period: Option<u8>,
    },
    /// Simulation benchmark: sup-norm error table over models, K and seeds.
    Bench {
        #[command(flatten)]
        io: RunArgs,
        #[arg(long, value_parser = parse_rank)]
        rank: Option<RankPolicy>,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    /// JSON config (or a manifest from an earlier run); flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    /// Panel CSV with unit, period, treatment, time and event columns.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    target_unit: Option<String>,
    /// gap | energy:θ | fixed:k
    #[arg(long, value_parser = parse_rank)]
    rank: Option<RankPolicy>,
    /// Number of grid points.
    #[arg(long)]
    t0: Option<usize>,
    /// Pooled-time quantile used as the grid horizon.
    #[arg(long)]
    quantile: Option<f64>,
    #[arg(long, overrides_with = "no_clip")]
    clip: bool,
    #[arg(long, overrides_with = "clip")]
    no_clip: bool,
    /// Project the counterfactual onto non-increasing curves before clipping.
    #[arg(long)]
    isotonic: bool,
}

fn parse_rank(s: &str) -> Result<RankPolicy, String> {
    s.parse().map_err(|e: ssc_core::Error| e.to_string())
}

fn parse_model(s: &str) -> Result<Model, String> {
    s.parse().map_err(|e: ssc_core::Error| e.to_string())
}

impl EstimateArgs {
    fn apply(self, cfg: &mut EstimateConfig) {
        if let Some(input) = self.input {
            cfg.input = Some(input);
        }
        if let Some(unit) = self.target_unit {
            cfg.target_unit = Some(unit);
        }
        if let Some(rank) = self.rank {
            cfg.rank = rank;
        }
        if let Some(t0) = self.t0 {
            cfg.t0 = t0;
        }
        if let Some(q) = self.quantile {
            cfg.quantile = q;
        }
        if self.clip {
            cfg.clip = true;
        }
        if self.no_clip {
            cfg.clip = false;
        }
        if self.isotonic {
            cfg.isotonic = true;
        }
    }
}

fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Simulate { io, seed, model, k } => {
            let mut cfg: SimulateConfig = config::load(io.config.as_deref(), "simulate")?;
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg.model = model.unwrap_or(cfg.model);
            cfg.k = k.unwrap_or(cfg.k);
            commands::simulate(&cfg, &io.out)
        }
        Command::Estimate { io, est } => {
            let mut cfg: EstimateConfig = config::load(io.config.as_deref(), "estimate")?;
            est.apply(&mut cfg);
            commands::estimate_cmd(&cfg, &io.out)
        }
        Command::Bootstrap { io, est, b, level, seed } => {
            let mut cfg: BootstrapRunConfig = config::load(io.config.as_deref(), "bootstrap")?;
            let mut shared = cfg.estimate();
            est.apply(&mut shared);
            cfg = BootstrapRunConfig {
                input: shared.input,
                target_unit: shared.target_unit,
                rank: shared.rank,
                t0: shared.t0,
                quantile: shared.quantile,
                clip: shared.clip,
                isotonic: shared.isotonic,
                b: b.unwrap_or(cfg.b),
                level: level.unwrap_or(cfg.level),
                seed: seed.unwrap_or(cfg.seed),
                ..cfg
            };
            commands::bootstrap_cmd(&cfg, &io.out)
        }
        Command::Cox { io, input, target_unit, marginal } => {
            let mut cfg: CoxConfig = config::load(io.config.as_deref(), "cox")?;
            cfg.input = input.or(cfg.input);
            cfg.target_unit = target_unit.or(cfg.target_unit);
            cfg.marginal |= marginal;
            commands::cox_cmd(&cfg, &io.out)
        }
        Command::Km { io, input, unit, period } => {
            let mut cfg: KmConfig = config::load(io.config.as_deref(), "km")?;
            cfg.input = input.or(cfg.input);
            cfg.unit = unit.or(cfg.unit);
            cfg.period = period.or(cfg.period);
            commands::km_cmd(&cfg, &io.out)
        }
        Command::Bench { io, rank } => {
            let mut cfg: BenchRunConfig = config::load(io.config.as_deref(), "bench")?;
            cfg.rank_policy = rank.unwrap_or(cfg.rank_policy);
            commands::bench_cmd(&cfg, &io.out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ssc: {e}");
            e.exit_code()
        }
    }
}
