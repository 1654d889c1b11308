//! Command-line front end.

use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};

use crate::pipeline::{self, StageContext};
use crate::report;

/// Simulate, detect and analyse drift-scan pulse-pair searches
#[derive(Debug, Parser)]
#[command(author, version, about)]
#[command(propagate_version = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Config file (TOML); defaults to the run directory's config.toml
    #[arg(long, env = "PULSEPAIR_CONFIG")]
    pub config: Option<PathBuf>,

    /// Worker threads; output is identical for any value
    #[arg(long, env = "PULSEPAIR_WORKERS", default_value_t = 1)]
    pub workers: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize trigger frames from a scenario
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, env = "PULSEPAIR_SCENARIO")]
        scenario: PathBuf,
        /// Replace the scenario's seed
        #[arg(long, env = "PULSEPAIR_SEED")]
        seed: Option<u64>,
        #[arg(long, env = "PULSEPAIR_OUT")]
        out: PathBuf,
    },
    /// First level: pulses, pulse-pair candidates and visibilities
    Detect {
        #[command(flatten)]
        common: Common,
        /// Run directory holding frames.bin
        #[arg(long = "in", conflicts_with = "scenario")]
        input: Option<PathBuf>,
        /// Simulate on the fly instead of reading frames
        #[arg(long, env = "PULSEPAIR_SCENARIO")]
        scenario: Option<PathBuf>,
        #[arg(long, env = "PULSEPAIR_SEED")]
        seed: Option<u64>,
        /// Defaults to --in
        #[arg(long, env = "PULSEPAIR_OUT")]
        out: Option<PathBuf>,
    },
    /// Sun and RFI excision plus the exposure model
    Excise {
        #[command(flatten)]
        common: Common,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, env = "PULSEPAIR_OUT")]
        out: Option<PathBuf>,
    },
    /// Second level under one or more variants
    Analyze {
        #[command(flatten)]
        common: Common,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, env = "PULSEPAIR_OUT")]
        out: Option<PathBuf>,
        /// Comma list: baseline, phase_noise[:a..b], tau_zero, tau:<ns>, modified_filter
        #[arg(long, default_value = "baseline")]
        variant: String,
    },
    /// Every falsification variant plus the high-visibility scan
    Diagnose {
        #[command(flatten)]
        common: Common,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, env = "PULSEPAIR_OUT")]
        out: Option<PathBuf>,
    },
    /// Figure-data files for an analysed variant
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, env = "PULSEPAIR_OUT")]
        out: Option<PathBuf>,
        #[arg(long, default_value = "baseline")]
        variant: String,
        /// Comma list of fig2, fig3, fig4, fig20, fig21, fig22, fig23, fig24, fig26, or all
        #[arg(long, default_value = "all")]
        figure: String,
    },
}

fn context(common: &Common, run_dir: Option<&Path>) -> Result<StageContext> {
    if common.workers == 0 {
        bail!("--workers must be at least 1");
    }
    StageContext::resolve(common.config.as_deref(), run_dir, common.workers)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            common,
            scenario,
            seed,
            out,
        } => {
            let ctx = context(&common, None)?;
            pipeline::simulate_stage(&ctx, &scenario, seed, &out)?;
            eprintln!("frames written to {}", out.display());
        }
        Command::Detect {
            common,
            input,
            scenario,
            seed,
            out,
        } => {
            let Some(out) = out.or_else(|| input.clone()) else {
                bail!("detect --scenario needs --out");
            };
            let ctx = context(&common, input.as_deref())?;
            let fl = pipeline::detect_stage(&ctx, input.as_deref(), scenario.as_deref(), seed, &out)?;
            eprintln!(
                "{} triggers, {} pulses, {} candidates",
                fl.pointings.len(),
                fl.pulses.len(),
                fl.candidates.len()
            );
        }
        Command::Excise { common, input, out } => {
            let out = out.unwrap_or_else(|| input.clone());
            let ctx = context(&common, Some(&input))?;
            let ex = pipeline::excise_stage(&ctx, &input, &out)?;
            eprintln!(
                "kept {} candidates ({} Sun, {} RFI removed; {} tags at threshold {})",
                ex.kept.len(),
                ex.removed_sun,
                ex.removed_rfi,
                ex.tags.len(),
                ex.threshold
            );
        }
        Command::Analyze {
            common,
            input,
            out,
            variant,
        } => {
            let out = out.unwrap_or_else(|| input.clone());
            let ctx = context(&common, Some(&input))?;
            let variants = pipeline::parse_variants(&variant, &ctx.run)?;
            let results = pipeline::analyze_stage(&ctx, &input, &out, &variants)?;
            print_summary(&results);
        }
        Command::Diagnose { common, input, out } => {
            let out = out.unwrap_or_else(|| input.clone());
            let ctx = context(&common, Some(&input))?;
            let results = pipeline::diagnose_stage(&ctx, &input, &out)?;
            print_summary(&results);
        }
        Command::Report {
            common,
            input,
            out,
            variant,
            figure,
        } => {
            let out = out.unwrap_or_else(|| input.clone());
            let ctx = context(&common, Some(&input))?;
            let figures = report::parse_figures(&figure)?;
            for p in report::report_stage(&ctx, &input, &out, &variant, &figures)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn print_summary(results: &[pipeline::VariantResult]) {
    for r in results {
        let bins = r.primary_doi_bins();
        println!(
            "{}\theap={}\tdois={}\t{}",
            r.name(),
            r.analysis.heap.len(),
            bins.len(),
            bins.iter().map(|b| b.to_string()).collect::<Vec<_>>().join(",")
        );
    }
}
