//! `critbbm`: batch front door for the simulation, PDE and invariance experiments.
//!
//! Exit status: 0 when every requested check passes, 1 on a failed check,
//! 2 on a schema or parameter error, 3 on a resource cap, 4 on other runtime errors.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "critbbm", version, about = "Critical branching Brownian motion laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct Common {
    /// JSON config for the subcommand; omitted keys take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: u64,
    /// Output directory; must not exist or be empty.
    #[arg(long)]
    pub out: PathBuf,
    /// Worker thread cap.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum InitialKind {
    Step,
}

#[derive(Subcommand)]
enum Command {
    /// Single-particle BBM replicas.
    Simulate(Common),
    /// FKPP field, traveling-wave profile and constant report.
    Fkpp {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        initial: Option<InitialKind>,
        /// Final time.
        #[arg(long = "T")]
        horizon: Option<f64>,
    },
    /// Configurations of the decorated fixed-point process.
    SampleExtremal(Common),
    /// Laplace-functional invariance test of a sampler.
    Invariance(Common),
    /// Window counts of evolved starting configurations.
    Basin(Common),
    /// Acceptance criteria with a pass/fail summary.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Reduced replica counts.
        #[arg(long)]
        quick: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let common = match &cli.command {
        Command::Simulate(c) | Command::SampleExtremal(c) | Command::Invariance(c) | Command::Basin(c) => c,
        Command::Fkpp { common, .. } | Command::Verify { common, .. } => common,
    };
    if let Some(n) = common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(4);
        }
    }
    let result = match &cli.command {
        Command::Simulate(c) => commands::simulate(c),
        Command::Fkpp { common, initial, horizon } => commands::fkpp(common, *initial, *horizon),
        Command::SampleExtremal(c) => commands::sample_extremal(c),
        Command::Invariance(c) => commands::invariance(c),
        Command::Basin(c) => commands::basin(c),
        Command::Verify { common, quick } => commands::verify(common, *quick),
    };
    match result {
        Ok(status) => status.into(),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
