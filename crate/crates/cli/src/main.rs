use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod artifacts;
mod commands;
mod report;

#[derive(Parser)]
#[command(name = "flowpath", version, about = "Class-pathway analysis and pruning of ReLU classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct Common {
    /// Seed for every random choice in the run.
    #[arg(long, default_value_t = 0, global = true)]
    pub seed: u64,
    /// Output directory; inputs default to artifacts already in it.
    #[arg(long, default_value = "out", global = true)]
    pub out: PathBuf,
}

#[derive(Args, Clone)]
pub struct PathwayArgs {
    /// Coefficient between last pooling and last convolution node-values, in (0, 1].
    #[arg(long = "k-coeff", default_value_t = 1.0)]
    pub k_coeff: f64,
    /// Node-value normalization: none or per_layer_l2.
    #[arg(long, default_value = "none")]
    pub normalize: String,
    /// Also record input-layer node-values.
    #[arg(long)]
    pub include_input: bool,
    /// Pathway layers used for distances, comma separated (default: all).
    #[arg(long, value_delimiter = ',')]
    pub layers: Option<Vec<usize>>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
pub enum EvalSet {
    /// The 10,000 test images.
    Test,
    /// All 70,000 train and test images with fresh noise.
    Noisy70k,
    /// The test images with noise.
    NoisyTest,
}

#[derive(Subcommand)]
enum Command {
    /// Train a reference or custom architecture on MNIST.
    Train {
        #[command(flatten)]
        common: Common,
        /// mlp-ref, cnn-ref, or a path to a JSON architecture file.
        #[arg(long, default_value = "mlp-ref")]
        arch: String,
        #[arg(long, default_value = "data/mnist")]
        data_dir: PathBuf,
        /// Default 20 for dense networks, 10 for convolutional ones.
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long, default_value_t = 0.01)]
        lr: f64,
        #[arg(long, default_value_t = 0.9)]
        momentum: f64,
        #[arg(long, default_value_t = 64)]
        batch_size: usize,
        /// Train on the first N training images only.
        #[arg(long)]
        train_limit: Option<usize>,
        /// Evaluate on the first N test images only.
        #[arg(long)]
        test_limit: Option<usize>,
    },
    /// Extract class-pathways from a model.
    Extract {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
        #[command(flatten)]
        pathway: PathwayArgs,
    },
    /// Pathway distance matrix and per-class averages.
    Distances {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        pathways: Option<PathBuf>,
        /// Pathway layers to include, comma separated (default: all).
        #[arg(long, value_delimiter = ',')]
        layers: Option<Vec<usize>>,
    },
    /// Confusion matrix of a model on clean or noise-augmented MNIST.
    Confusion {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value = "data/mnist")]
        data_dir: PathBuf,
        #[arg(long, value_enum, default_value_t = EvalSet::Noisy70k)]
        set: EvalSet,
        /// Gaussian noise standard deviation in pixel units.
        #[arg(long, default_value_t = 0.3)]
        sigma: f64,
        /// Use only the first N samples of the set.
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Top-k coverage of confusion errors by nearest pathways, and rank correlation.
    Coverage {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        distances: Option<PathBuf>,
        #[arg(long)]
        confusion: Option<PathBuf>,
    },
    /// Error rate while cutting the least important nodes.
    PruneSweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value = "data/mnist")]
        data_dir: PathBuf,
        #[command(flatten)]
        pathway: PathwayArgs,
        /// Cut counts for each swept layer, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "0,10,50,100,200")]
        cuts: Vec<usize>,
        /// Cut all swept layers together, one count per layer in --layers order.
        #[arg(long)]
        joint: bool,
        /// Zero nodes instead of deleting them.
        #[arg(long)]
        mask: bool,
        /// Also sweep random cuts, averaged over this many seeds.
        #[arg(long, default_value_t = 0)]
        random_control: usize,
        #[arg(long)]
        test_limit: Option<usize>,
    },
    /// Recompute the published summary numbers from the embedded tables.
    ValidatePaper {
        #[command(flatten)]
        common: Common,
        /// Exit with status 1 if any check fails.
        #[arg(long)]
        strict: bool,
    },
    /// Consolidated JSON and text report of the artifacts in the output directory.
    Report {
        #[command(flatten)]
        common: Common,
        /// Report on the embedded published tables instead of run artifacts.
        #[arg(long)]
        paper_fixtures: bool,
    },
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Train { common, arch, data_dir, epochs, lr, momentum, batch_size, train_limit, test_limit } => {
            commands::train(&common, &arch, &data_dir, epochs, lr, momentum, batch_size, train_limit, test_limit)?
        }
        Command::Extract { common, model, pathway } => commands::extract(&common, model, &pathway)?,
        Command::Distances { common, pathways, layers } => commands::distances(&common, pathways, layers)?,
        Command::Confusion { common, model, data_dir, set, sigma, limit } => {
            commands::confusion(&common, model, &data_dir, set, sigma, limit)?
        }
        Command::Coverage { common, distances, confusion } => commands::coverage(&common, distances, confusion)?,
        Command::PruneSweep { common, model, data_dir, pathway, cuts, joint, mask, random_control, test_limit } => {
            commands::prune_sweep(&common, model, &data_dir, &pathway, &cuts, joint, mask, random_control, test_limit)?
        }
        Command::ValidatePaper { common, strict } => {
            let all_passed = report::validate_paper(&common)?;
            if strict && !all_passed {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Report { common, paper_fixtures } => report::report(&common, paper_fixtures)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    // clap exits with status 2 on usage errors
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
