use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use polygan_cli::config::SEED_ENV;
use polygan_cli::{commands, CliError, RunConfig};

#[derive(Parser)]
#[command(name = "polygan", version, about = "Multi-conditioned GAN garment transfer on synthetic data")]
struct Cli {
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    sets: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a stage dataset (stage 1-3) or pipeline inputs (stage 4).
    GenData,
    /// Train one stage model.
    Train {
        /// Continue from the checkpoint already in out_dir.
        #[arg(long)]
        resume: bool,
    },
    /// Run all four stages on one input directory.
    Pipeline {
        #[arg(long)]
        stage1: PathBuf,
        #[arg(long)]
        stage2: PathBuf,
        #[arg(long)]
        stage3: PathBuf,
        /// Directory with skeleton, garment, body, silhouette, head and head_mask PNGs.
        #[arg(long)]
        inputs: PathBuf,
    },
    /// SSIM between identically named PNGs of two directories.
    Eval {
        #[arg(long)]
        generated: PathBuf,
        #[arg(long)]
        target: PathBuf,
    },
    /// Run the built-in consistency checks.
    Selfcheck,
}

fn run(cli: Cli) -> Result<bool, CliError> {
    let env_seed = std::env::var(SEED_ENV).ok();
    let load = || RunConfig::load(cli.config.as_deref(), &cli.sets, env_seed.as_deref());
    match &cli.command {
        Command::GenData => {
            let out = commands::gen_data(&load()?)?;
            println!("{}", out.display());
        }
        Command::Train { resume } => {
            let outcome = commands::train(&load()?, *resume)?;
            println!("{}", outcome.checkpoint.display());
        }
        Command::Pipeline {
            stage1,
            stage2,
            stage3,
            inputs,
        } => {
            commands::pipeline(&load()?, [stage1, stage2, stage3], inputs)?;
        }
        Command::Eval { generated, target } => {
            let report = commands::eval(&load()?, generated, target)?;
            print!("{}", report.to_csv());
        }
        Command::Selfcheck => {
            let checks = commands::selfcheck()?;
            let mut ok = true;
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                ok &= c.passed;
            }
            return Ok(ok);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
