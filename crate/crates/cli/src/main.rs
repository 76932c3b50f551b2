use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use convsparse_cli::{load_config, run, CliError, ExperimentKind};

#[derive(Parser)]
#[command(name = "convsparse", version, about = "Shift-invariant clustering and sparse feature benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pairwise Euclidean, shift-minimized and cross-correlation distances.
    Dist(RunArgs),
    /// KM vs shift-invariant KM on digits placed at random offsets in larger frames.
    ClusterShifted(RunArgs),
    /// Feature extractors + linear SVM over a grid of training sizes.
    Classify(RunArgs),
    /// Patch / kernel size sweep for the dictionary-based extractors.
    SweepPatch(RunArgs),
    /// Writes randomly shifted copies of a dataset.
    GenShifted(RunArgs),
    /// Fits the configured extractors and writes their atoms.
    ExportAtoms(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory [default: results/<experiment>]
    #[arg(long)]
    out: Option<PathBuf>,
    /// Multiplies every sample count in the config.
    #[arg(long)]
    scale: Option<f64>,
}

fn execute(kind: ExperimentKind, args: RunArgs) -> Result<(), CliError> {
    let mut lc = load_config(&args.config)?;
    if lc.config.experiment != kind {
        return Err(CliError::Config(format!(
            "{}: config describes a {} experiment, not {}",
            args.config.display(),
            lc.config.experiment.name(),
            kind.name()
        )));
    }
    if let Some(seed) = args.seed {
        lc.config.seed = seed;
    }
    if let Some(f) = args.scale {
        lc.config.apply_scale(f)?;
    }
    let out = args.out.unwrap_or_else(|| PathBuf::from("results").join(kind.name()));
    let manifest = run(&lc, &out)?;
    println!("{} ({}) -> {}", kind.name(), manifest.config_hash, out.display());
    for f in &manifest.files {
        println!("  {}", f.path);
    }
    for n in &manifest.notes {
        println!("  note: {n}");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match cli.command {
        Command::Dist(a) => (ExperimentKind::Dist, a),
        Command::ClusterShifted(a) => (ExperimentKind::ClusterShifted, a),
        Command::Classify(a) => (ExperimentKind::Classify, a),
        Command::SweepPatch(a) => (ExperimentKind::SweepPatch, a),
        Command::GenShifted(a) => (ExperimentKind::GenShifted, a),
        Command::ExportAtoms(a) => (ExperimentKind::ExportAtoms, a),
    };
    match execute(kind, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
