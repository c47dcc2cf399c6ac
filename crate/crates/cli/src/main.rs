use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tdvv::foa::Window;
use tdvv_cli::commands::{load_config, run_analyze, run_evaluate, run_simulate, truth_path, AnalyzeRequest, Overrides};
use tdvv_cli::wav::ChannelOrder;
use tdvv_cli::CliResult;

/// Direction and floor-reflection range estimation from FOA recordings.
#[derive(Debug, Parser)]
#[command(name = "tdvv", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate DoA and range of 4-channel FOA recordings.
    Analyze(AnalyzeArgs),
    /// Render a floor-reflection scene to a 4-channel WAV and a truth record.
    Simulate(SimulateArgs),
    /// Compare a report against a truth record.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    /// WAV files in W, X, Y, Z order (SN3D).
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Frame length in seconds.
    #[arg(long)]
    frame_sec: Option<f64>,
    /// Frame overlap in [0, 1).
    #[arg(long)]
    overlap: Option<f64>,
    /// Expected sample rate in Hz; other rates are rejected.
    #[arg(long)]
    fs: Option<u32>,
    /// Analysis window: hann or rectangular.
    #[arg(long)]
    window: Option<Window>,
    /// Inputs are in ACN order (W, Y, Z, X).
    #[arg(long)]
    acn: bool,
    /// TOML configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Also report the active-intensity baseline.
    #[arg(long)]
    baseline: bool,
    /// Per-frame estimates as CSV.
    #[arg(long, value_name = "CSV")]
    frames_csv: Option<PathBuf>,
    /// Lag matrices of the attack-selected frames as CSV.
    #[arg(long, value_name = "CSV")]
    tdvv_dump: Option<PathBuf>,
    /// Report file, or a directory for several inputs. Defaults to stdout.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Scene description (TOML).
    scene: PathBuf,
    /// Output WAV; the truth record is written next to it as `.truth`.
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    report: PathBuf,
    truth: PathBuf,
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Analyze(args) => {
            let overrides = Overrides {
                frame_sec: args.frame_sec,
                overlap: args.overlap,
                sample_rate: args.fs,
                window: args.window,
            };
            let request = AnalyzeRequest {
                config: load_config(args.config.as_deref(), overrides)?,
                inputs: args.inputs,
                order: if args.acn { ChannelOrder::Acn } else { ChannelOrder::Fuma },
                baseline: args.baseline,
                output: args.output,
                frames_csv: args.frames_csv,
                tdvv_dump: args.tdvv_dump,
            };
            run_analyze(&request)
        }
        Command::Simulate(args) => {
            for warning in run_simulate(&args.scene, &args.output, args.seed)? {
                eprintln!("tdvv: warning: {warning}");
            }
            eprintln!(
                "wrote {} and {}",
                args.output.display(),
                truth_path(&args.output).display()
            );
            Ok(())
        }
        Command::Evaluate(args) => {
            print!("{}", run_evaluate(&args.report, &args.truth)?.to_toml());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("tdvv: {}: {err}", err.reason());
            ExitCode::from(err.exit_code())
        }
    }
}
