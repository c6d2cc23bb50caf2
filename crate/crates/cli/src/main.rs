use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Parser, Subcommand};

use memsolve::membrane::EpsChoice;
use memsolve_cli::commands::{self, EXIT_CONFIG};
use memsolve_cli::{cmd_bound, cmd_smallgap, cmd_solve, cmd_sweep, SmallGapMode};

#[derive(Parser)]
#[command(name = "memsolve", version, about = "Electrostatic membrane free boundary solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the coupled problem for one configuration.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Small-gap branches at a voltage, or the pull-in voltage.
    #[command(group(ArgGroup::new("mode").required(true).args(["lambda", "pullin"])))]
    Smallgap {
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        pullin: bool,
        /// Nodes of the output grid on [-1, 1].
        #[arg(long, default_value_t = 257)]
        nx: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Aspect-ratio sweep with rate fits.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write a gnuplot script for the norms.
        #[arg(long)]
        plots: bool,
    },
    /// Voltage threshold below which existence is guaranteed.
    #[command(group(ArgGroup::new("aspect").required(true).args(["eps", "uniform"])))]
    Bound {
        #[arg(long)]
        r0: Option<f64>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        uniform: bool,
        #[arg(long)]
        optimize: bool,
    },
}

fn run(cli: Cli) -> Result<(), commands::Failure> {
    match cli.command {
        Command::Solve { config, out } => cmd_solve(&config, &out).map(|_| ()),
        Command::Smallgap {
            lambda,
            pullin: _,
            nx,
            out,
        } => {
            let mode = lambda.map_or(SmallGapMode::PullIn, SmallGapMode::Lambda);
            let n = cmd_smallgap(mode, nx, &out)?;
            eprintln!("{n} branch(es) written");
            Ok(())
        }
        Command::Sweep { config, out, plots } => cmd_sweep(&config, &out, plots).map(|_| ()),
        Command::Bound {
            r0,
            eps,
            uniform: _,
            optimize,
        } => {
            let choice = eps.map_or(EpsChoice::Uniform, EpsChoice::Value);
            let doc = cmd_bound(r0, choice, optimize)?;
            println!("{}", serde_json::to_string_pretty(&doc).expect("json value"));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code as u8)
        }
    }
}
