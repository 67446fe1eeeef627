//! `mrvf` pipeline driver: voxel geometry generation, dictionary building,
//! regression training, map reconstruction, and evaluation reports.

mod commands;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "mrvf", about = "MR vascular fingerprinting pipeline", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat key=value configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides sampling.seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = auto).
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Suppress progress logging.
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate voxel geometry masks plus a manifest.
    GenVoxels {
        #[command(flatten)]
        common: Common,
        /// Output directory for masks and manifest.tsv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Build an MRVD fingerprint dictionary from a mask manifest.
    BuildDict {
        #[command(flatten)]
        common: Common,
        /// Manifest written by gen-voxels.
        #[arg(long)]
        masks: PathBuf,
        /// Output MRVD path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the DBL regression model from a dictionary.
    Train {
        #[command(flatten)]
        common: Common,
        /// Input MRVD dictionary.
        #[arg(long)]
        dict: PathBuf,
        /// Output MRVM model path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruct parameter maps from a fingerprint volume.
    Reconstruct {
        #[command(flatten)]
        common: Common,
        /// Input fingerprint volume (MRVD container; meta key dims=nx,ny,nz).
        #[arg(long)]
        input: PathBuf,
        /// Dictionary for DBM matching.
        #[arg(long)]
        dict: Option<PathBuf>,
        /// Model for DBL prediction.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Overrides recon.method from the config.
        #[arg(long)]
        method: Option<String>,
        /// Output directory for VXF1 maps and summary.tsv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run recovery, cross-model bias, and t-test reports.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Output directory for TSV reports.
        #[arg(long)]
        out: PathBuf,
    },
}

fn init_threads(threads: usize) {
    if threads > 0 {
        // ignore failure if a pool already exists (tests call main repeatedly)
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenVoxels { common, out } => {
            init_threads(common.threads);
            commands::gen_voxels(&common.config, common.seed, common.quiet, &out)
        }
        Command::BuildDict { common, masks, out } => {
            init_threads(common.threads);
            commands::build_dict(&common.config, common.seed, common.quiet, &masks, &out)
        }
        Command::Train { common, dict, out } => {
            init_threads(common.threads);
            commands::train(&common.config, common.seed, common.quiet, &dict, &out)
        }
        Command::Reconstruct {
            common,
            input,
            dict,
            model,
            method,
            out,
        } => {
            init_threads(common.threads);
            commands::reconstruct(
                &common.config,
                common.quiet,
                &input,
                dict.as_deref(),
                model.as_deref(),
                method.as_deref(),
                &out,
            )
        }
        Command::Eval { common, out } => {
            init_threads(common.threads);
            commands::eval(&common.config, common.seed, common.quiet, &out)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(commands::CmdError::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_VALIDATION)
        }
        Err(commands::CmdError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
