use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ctbp_cli::config::EngineKind;
use ctbp_cli::{cmd_filter, cmd_infer, cmd_simulate, CliResult, Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "ctbp", version, about = "Simulation, filtering and inference for branching-process epidemic models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate latent paths and observations.
    Simulate(Common),
    /// Filter an observed series.
    Filter(Common),
    /// Sample parameter posteriors.
    Infer(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    engine: Option<EngineKind>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    chains: Option<usize>,
}

impl Common {
    fn load(&self) -> CliResult<RunConfig> {
        let mut config = RunConfig::load(&self.config)?;
        config.apply(&Overrides {
            seed: self.seed,
            engine: self.engine,
            out_dir: self.out.clone(),
            chains: self.chains,
        });
        config.validate()?;
        Ok(config)
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate(c) => {
            let out = cmd_simulate(&c.load()?)?;
            println!("wrote {} and {}", out.states.display(), out.observations.display());
        }
        Command::Filter(c) => {
            let out = cmd_filter(&c.load()?)?;
            println!("wrote {} (total loglik {})", out.path.display(), out.total_loglik);
        }
        Command::Infer(c) => {
            let out = cmd_infer(&c.load()?)?;
            println!(
                "wrote {} and {} ({:.2} s)",
                out.samples.display(),
                out.summary_path.display(),
                out.summary.seconds
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
