use std::path::PathBuf;
use std::process::ExitCode;

use clap::builder::TypedValueParser;
use clap::{Parser, Subcommand};
use turbulence_restore::training::Preset;
use turbulence_restore::workflow::{self, WorkflowError};

/// Turbulence simulation and residual-CNN restoration.
#[derive(Parser)]
#[command(name = "atrm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate distorted sequences from clean images.
    Simulate {
        #[arg(long)]
        clean: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        frames: usize,
        /// key=value simulator settings.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train a restoration model on a simulated dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "desk")]
        preset: Preset,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1, value_parser = clap::builder::PossibleValuesParser::new(["1", "3"]).map(|s| s.parse::<usize>().unwrap()))]
        in_frames: usize,
        #[arg(long, default_value_t = 1)]
        avg_window: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Override the preset's epoch count.
        #[arg(long)]
        epochs: Option<usize>,
        /// Continue training from a checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Restore a distorted sequence with a trained model.
    Restore {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        avg_window: usize,
        /// Record throughput in the manifest.
        #[arg(long)]
        report: bool,
    },
    /// Score frames against a clean image and write a CSV report.
    Evaluate {
        #[arg(long)]
        restored: PathBuf,
        #[arg(long)]
        clean: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cmd: Command) -> Result<(), WorkflowError> {
    match cmd {
        Command::Simulate { clean, out, frames, config, seed } => {
            let m = workflow::simulate(&workflow::SimulateOptions { clean, out, frames, config, seed })?;
            println!("wrote {} files", m.outputs.len());
        }
        Command::Train { data, preset, out, in_frames, avg_window, seed, epochs, resume } => {
            workflow::train_model(&workflow::TrainOptions {
                data,
                preset,
                out: out.clone(),
                in_frames,
                avg_window,
                seed,
                epochs,
                resume,
            })?;
            println!("wrote {}", out.display());
        }
        Command::Restore { model, input, out, avg_window, report } => {
            let m = workflow::restore(&workflow::RestoreOptions { model, input, out, avg_window, report })?;
            println!("restored {} frames", m.outputs.len());
            if let Some(t) = m.throughput {
                println!("{:.0} pixels/s", t.pixels_per_second);
            }
        }
        Command::Evaluate { restored, clean, out } => {
            let r = workflow::evaluate(&workflow::EvaluateOptions { restored, clean, out })?;
            println!("mean PSNR {:.3} dB, SSIM {:.4}", r.mean.psnr_db, r.mean.ssim);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
