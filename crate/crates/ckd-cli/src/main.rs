//! Command-line front end for the distillation laboratory.
//!
//! Every subcommand takes one config file that fully determines the run;
//! flags are limited to the output directory, seed control, replica
//! fan-out and report format. Exit codes: 0 success, 2 config errors,
//! 3 runtime errors.

use ckd::commands::{
    cmd_ablate, cmd_bounds, cmd_cascade, cmd_distill, cmd_eval, cmd_pretrain, cmd_report,
    default_out_root,
};
use ckd::eval::ReportFormat;
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "ckd",
    about = "Desk-scale laboratory for cascaded knowledge distillation",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct CommonArgs {
    /// Run config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to <out-root>/<command>.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the config's top-level seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Build corpora and pretrain the capacity tiers (encoder proxy,
    /// then PT and FT per tier).
    Pretrain {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Single-teacher distillation (DPT, SFT, DFT) of a fresh student.
    Distill {
        #[command(flatten)]
        common: CommonArgs,
        /// Report format: csv | json | markdown.
        #[arg(long, default_value = "markdown")]
        format: String,
    },
    /// Run a cascade plan: bottom_up, top_down, single_teacher or none.
    Cascade {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value = "markdown")]
        format: String,
    },
    /// Seed-replicated strategy comparison (direct vs KD vs cascades).
    Ablate {
        #[command(flatten)]
        common: CommonArgs,
        /// Replace the config's seed list with N derived seeds.
        #[arg(long)]
        seeds: Option<usize>,
        /// Worker threads for seed replicas.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Sweep the generalization-bound parameter grid.
    Bounds {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Evaluate checkpoints on the held-out splits.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value = "markdown")]
        format: String,
    },
    /// Re-emit a stored result table in another format.
    Report {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value = "markdown")]
        format: String,
    },
}

fn out_dir(common: &CommonArgs, command: &str) -> PathBuf {
    common.out.clone().unwrap_or_else(|| default_out_root().join(command))
}

fn run() -> ckd::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Pretrain { common } => {
            let out = out_dir(&common, "pretrain");
            let artifacts = cmd_pretrain(&common.config, &out, common.seed)?;
            for (tier, path) in &artifacts.checkpoints {
                println!("{}: {}", tier.as_str(), path.display());
            }
        }
        Command::Distill { common, format } => {
            let out = out_dir(&common, "distill");
            let fmt = ReportFormat::parse(&format)?;
            let artifacts = cmd_distill(&common.config, &out, common.seed, fmt)?;
            println!("final checkpoint: {}", artifacts.final_checkpoint.display());
            print_avgs(&artifacts.table);
        }
        Command::Cascade { common, format } => {
            let out = out_dir(&common, "cascade");
            let fmt = ReportFormat::parse(&format)?;
            let artifacts = cmd_cascade(&common.config, &out, common.seed, fmt)?;
            println!("final checkpoint: {}", artifacts.final_checkpoint.display());
            print_avgs(&artifacts.table);
        }
        Command::Ablate { common, seeds, jobs } => {
            let out = out_dir(&common, "ablate");
            let table = cmd_ablate(&common.config, &out, common.seed, seeds, jobs)?;
            print_avgs(&table);
            println!("reports written to {}", out.display());
        }
        Command::Bounds { common } => {
            let out = out_dir(&common, "bounds");
            let artifacts = cmd_bounds(&common.config, &out)?;
            println!(
                "{} grid points, holds fraction {}, {} flips",
                artifacts.table.records.len(),
                artifacts.table.holds_fraction,
                artifacts.table.flips.len()
            );
        }
        Command::Eval { common, format } => {
            let out = out_dir(&common, "eval");
            let fmt = ReportFormat::parse(&format)?;
            let table = cmd_eval(&common.config, &out, common.seed, fmt)?;
            print_avgs(&table);
        }
        Command::Report { common, format } => {
            let out = out_dir(&common, "report");
            let fmt = ReportFormat::parse(&format)?;
            let path = cmd_report(&common.config, &out, fmt)?;
            println!("report written to {}", path.display());
        }
    }
    Ok(())
}

fn print_avgs(table: &ckd::eval::ResultTable) {
    for a in &table.aggregates {
        println!(
            "{} [{}]: avg {:.4} ± {:.4} over {} seed(s)",
            a.method, a.strategy, a.mean_avg, a.stdev_avg, a.n_seeds
        );
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config_error() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}
