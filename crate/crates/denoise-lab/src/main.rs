use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use denoise_lab::cli::{
    self, cmd_compare, cmd_optimize, cmd_phase_diagram, cmd_simulate, cmd_theory, load_config,
    CommandOutput, OutputFormat,
};
use denoise_lab::error::Result;

/// Linear denoisers in the proportional regime: closed-form risk
/// predictions, Monte Carlo verification, and training-noise optimization.
#[derive(Parser)]
#[command(name = "denoise-lab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// TOML config file (strict: unknown keys are rejected)
    #[arg(long)]
    config: PathBuf,
    /// Override a config value after parsing, e.g. --set experiment.d=100
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output file
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    format: OutputFormat,
    /// Override the master seed from the config
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate closed-form risk predictions (thm1, thm2, or cor2 mode)
    Theory(CommonArgs),
    /// Run a seeded Monte Carlo experiment or sweep
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        /// Also export each trained denoiser matrix (trial 0) as CSV here
        #[arg(long, value_name = "DIR")]
        dump_denoisers: Option<PathBuf>,
    },
    /// Optimize the training-noise covariance spectrum
    Optimize(CommonArgs),
    /// Tabulate the scalar-case phase diagram over (c_z, kappa)
    PhaseDiagram(CommonArgs),
    /// Compare the optimized denoiser against the Wiener baselines over a
    /// signal-strength sweep
    Compare(CommonArgs),
}

fn write_output(args: &CommonArgs, output: CommandOutput) -> Result<()> {
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(&args.out, output.content)?;
    if let Some(summary) = output.summary {
        println!("{summary}");
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Theory(args) => {
            let config = load_config(&args.config, &args.set)?;
            let output = cmd_theory(&config, args.format)?;
            write_output(&args, output)
        }
        Command::Simulate {
            common,
            dump_denoisers,
        } => {
            let config = load_config(&common.config, &common.set)?;
            let output = cmd_simulate(&config, common.format, common.seed)?;
            if let Some(dir) = dump_denoisers {
                cli::dump_denoisers(&config, common.seed, &dir)?;
            }
            write_output(&common, output)
        }
        Command::Optimize(args) => {
            let config = load_config(&args.config, &args.set)?;
            let output = cmd_optimize(&config, args.format, args.seed)?;
            write_output(&args, output)
        }
        Command::PhaseDiagram(args) => {
            let config = load_config(&args.config, &args.set)?;
            let output = cmd_phase_diagram(&config, args.format)?;
            write_output(&args, output)
        }
        Command::Compare(args) => {
            let config = load_config(&args.config, &args.set)?;
            let output = cmd_compare(&config, args.format, args.seed)?;
            write_output(&args, output)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
