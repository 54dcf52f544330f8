use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use hazardscope_cli::error::{PipelineError, EXIT_OTHER};
use hazardscope_cli::glob::VideoPattern;
use hazardscope_cli::pipeline::{self, Command};
use hazardscope_cli::submission::read_submission;
use hazardscope_cli::synth::generate_synthetic;
use hazardscope_cli::PipelineConfig;

#[derive(Parser)]
#[command(
    name = "hazardscope",
    version,
    about = "Driver reaction, hazard and caption predictions for annotated dashcam video"
)]
struct Cli {
    /// Pipeline configuration (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Only process videos whose id matches this pattern (`*`, `?`, `[...]`).
    #[arg(long, global = true, value_name = "GLOB")]
    videos: Option<String>,
    /// Reaction strategy (signals, react, run) or hazard base strategy
    /// (hazards, caption), overriding the config.
    #[arg(long, global = true, value_name = "NAME")]
    strategy: Option<String>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Seed for `synth`.
    #[arg(long, global = true, value_name = "N", default_value_t = 42)]
    seed: u64,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write per-frame signal CSVs and plots.
    Signals,
    /// Write driver-reaction series and change points.
    React,
    /// Write the selected hazard tracks.
    Hazards,
    /// Caption the selected hazard tracks.
    Caption,
    /// Run every stage and write the submission (and report, given ground truth).
    Run,
    /// Score an existing submission against the configured ground truth.
    Eval {
        /// Submission CSV; defaults to `<out>/submission.csv`.
        #[arg(long, value_name = "PATH")]
        submission: Option<PathBuf>,
    },
    /// Generate the synthetic dataset into `--out`.
    Synth,
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, PipelineError> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| PipelineError::Config("--config is required for this command".into()))?;
    let mut config = PipelineConfig::load(path)?;
    config.apply_env();
    if let Some(name) = &cli.strategy {
        match cli.command {
            Cmd::Hazards | Cmd::Caption => config.set_hazard_base(name)?,
            _ => config.set_reaction_strategy(name)?,
        }
    }
    Ok(config)
}

fn jobs(cli: &Cli) -> usize {
    cli.jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn execute(cli: &Cli) -> Result<(), PipelineError> {
    if let Cmd::Synth = cli.command {
        let ds = generate_synthetic(&cli.out, cli.seed)?;
        for p in &ds.planted {
            log::info!(
                "{}: reaction at frame {}, hazard {}",
                p.video_id,
                p.reaction_frame,
                p.hazard_class
            );
        }
        println!("{}", ds.config_path.display());
        return Ok(());
    }
    let config = load_config(cli)?;
    let pattern = cli.videos.as_deref().map(VideoPattern::new).transpose()?;
    let stage =
        |command| pipeline::run_stage(command, config.clone(), pattern.as_ref(), jobs(cli), &cli.out).map(|_| ());
    match &cli.command {
        Cmd::Signals => stage(Command::Signals),
        Cmd::React => stage(Command::React),
        Cmd::Hazards => stage(Command::Hazards),
        Cmd::Caption => stage(Command::Caption),
        Cmd::Run => {
            let out = pipeline::run(config, pattern.as_ref(), jobs(cli), &cli.out)?;
            println!("{}", out.submission.display());
            if let Some(report) = out.report {
                println!("{}", report.to_json()["overall"]);
            }
            Ok(())
        }
        Cmd::Eval { submission } => {
            let path = submission.clone().unwrap_or_else(|| cli.out.join("submission.csv"));
            eval(&config, pattern.as_ref(), &path, &cli.out)
        }
        Cmd::Synth => unreachable!("handled above"),
    }
}

fn eval(
    config: &PipelineConfig,
    pattern: Option<&VideoPattern>,
    submission: &Path,
    out: &Path,
) -> Result<(), PipelineError> {
    let inputs = pipeline::load_inputs(config, pattern)?;
    let truth = inputs
        .truth
        .ok_or_else(|| PipelineError::Config("eval needs paths.ground_truth".into()))?;
    let table = read_submission(submission)?;
    let report = pipeline::evaluate_table(&table, &truth)?;
    pipeline::write_report(out, &report)?;
    println!("{}", report.to_json()["overall"]);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli).context("hazardscope failed") {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let code = err
                .downcast_ref::<PipelineError>()
                .map_or(EXIT_OTHER, PipelineError::exit_code);
            ExitCode::from(code as u8)
        }
    }
}
