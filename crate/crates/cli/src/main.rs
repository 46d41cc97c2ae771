use clap::{Parser, Subcommand};
use diraclab_cli::config::Experiment;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "diraclab", version, about = "Numerical experiments for the inverse problem of the semilinear Dirac equation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Experiment configuration (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding the config
    #[arg(long)]
    out: Option<PathBuf>,
    /// RNG seed, overriding the config
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Print the experiment catalog with default parameters
    List,
    VerifyAlgebra(RunArgs),
    Expand(RunArgs),
    Transport(RunArgs),
    Collide(RunArgs),
    Reconstruct(RunArgs),
    Compare(RunArgs),
}

fn main() {
    let cli = Cli::parse();
    if let Ok(n) = std::env::var("DIRACLAB_THREADS") {
        match n.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("DIRACLAB_THREADS must be a positive integer, got `{n}`");
                std::process::exit(diraclab_cli::EXIT_CONFIG);
            }
        }
    }
    let (exp, args) = match cli.command {
        Command::List => {
            print!("{}", diraclab_cli::catalog::list_experiments());
            return;
        }
        Command::VerifyAlgebra(a) => (Experiment::VerifyAlgebra, a),
        Command::Expand(a) => (Experiment::Expand, a),
        Command::Transport(a) => (Experiment::Transport, a),
        Command::Collide(a) => (Experiment::Collide, a),
        Command::Reconstruct(a) => (Experiment::Reconstruct, a),
        Command::Compare(a) => (Experiment::Compare, a),
    };
    std::process::exit(diraclab_cli::run(exp, &args.config, args.out, args.seed));
}
