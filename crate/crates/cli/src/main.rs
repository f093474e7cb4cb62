//! `psr` — batch pipeline for photothermal super-resolution reconstruction.

mod artifacts;
mod config;
mod pipeline;

use clap::{Parser, Subcommand};
use serde::Serialize;

use config::PipelineConfig;
use pipeline::{Runner, StageMask};

#[derive(Parser)]
#[command(
    name = "psr",
    about = "Photothermal super-resolution reconstruction pipeline",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, clap::Args)]
struct CommonArgs {
    /// Config file path, or the bundled preset name `fig4-synthetic`.
    #[arg(long)]
    config: String,
    /// Output directory (overrides the config's output dir).
    #[arg(long)]
    out: Option<std::path::PathBuf>,
    /// Global seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Single-threaded execution for bit-reproducible artifacts.
    #[arg(long)]
    serial: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the pseudo-random illumination pattern set.
    GenPatterns(CommonArgs),
    /// Synthesize the thermal PSF stack.
    Psf(CommonArgs),
    /// Simulate the synthetic measurement stacks.
    Simulate(CommonArgs),
    /// Fit the defect contrast on one stored measurement.
    FitZeta {
        #[command(flatten)]
        common: CommonArgs,
        /// Measurement index to fit.
        #[arg(long, default_value_t = 0)]
        measurement: usize,
    },
    /// Invert the measurement stacks to a defect map.
    Reconstruct(CommonArgs),
    /// Search the regularization pair by differential evolution.
    Tune(CommonArgs),
    /// Score reconstructions against the ground truth.
    Score(CommonArgs),
    /// Conventional single-illumination evaluations.
    Baseline(CommonArgs),
    /// Run the enabled stages end to end.
    Pipeline(CommonArgs),
}

#[derive(Serialize)]
struct ErrorRecord<'a> {
    error: String,
    command: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    stage: Option<String>,
}

fn main() {
    let cli = Cli::parse();
    let (name, common) = match &cli.command {
        Command::GenPatterns(c) => ("gen-patterns", c.clone()),
        Command::Psf(c) => ("psf", c.clone()),
        Command::Simulate(c) => ("simulate", c.clone()),
        Command::FitZeta { common, .. } => ("fit-zeta", common.clone()),
        Command::Reconstruct(c) => ("reconstruct", c.clone()),
        Command::Tune(c) => ("tune", c.clone()),
        Command::Score(c) => ("score", c.clone()),
        Command::Baseline(c) => ("baseline", c.clone()),
        Command::Pipeline(c) => ("pipeline", c.clone()),
    };

    if let Err((stage, err)) = run(&cli.command, name, &common) {
        let record = ErrorRecord { error: format!("{err:#}"), command: name, stage };
        eprintln!("{}", serde_json::to_string(&record).unwrap_or_else(|_| format!("{err:#}")));
        std::process::exit(1);
    }
}

fn run(
    command: &Command,
    name: &str,
    common: &CommonArgs,
) -> Result<(), (Option<String>, anyhow::Error)> {
    if common.serial {
        // a single-thread pool makes every parallel map run in program order
        let _ = rayon::ThreadPoolBuilder::new().num_threads(1).build_global();
    }

    let (mut cfg, mut echo) = PipelineConfig::load(&common.config).map_err(|e| (None, e))?;
    if let Some(out) = &common.out {
        cfg.output.dir = out.clone();
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
        echo = format!("# seed overridden to {seed} on the command line\n{echo}");
    }

    let runner = Runner::new(cfg.clone(), echo, name, common.serial).map_err(|e| (None, e))?;
    let result = match command {
        Command::GenPatterns(_) => runner.run(StageMask::only("patterns")),
        Command::Psf(_) => runner.run(StageMask::only("psf")),
        Command::Simulate(_) => runner.run(StageMask::only("simulate")),
        Command::FitZeta { measurement, .. } => runner.fit_zeta_command(*measurement),
        Command::Reconstruct(_) => runner.run(StageMask::only("reconstruct")),
        Command::Tune(_) => runner.run(StageMask::only("tune")),
        Command::Score(_) => runner.run(StageMask::only("score")),
        Command::Baseline(_) => runner.run(StageMask::only("baseline")),
        Command::Pipeline(_) => runner.run(StageMask::from_config(&cfg)),
    };
    match result {
        Ok(manifest) => {
            let ran: Vec<&str> = manifest
                .stages
                .iter()
                .filter(|s| s.status == "ok" || s.status == "skipped")
                .map(|s| s.name.as_str())
                .collect();
            println!(
                "{name}: wrote {} artifacts to {} (stages: {})",
                manifest.artifacts.len(),
                cfg.output.dir.display(),
                if ran.is_empty() { "none".to_owned() } else { ran.join(", ") }
            );
            Ok(())
        }
        Err(e) => Err((Some(e.stage.clone()), e.source)),
    }
}
