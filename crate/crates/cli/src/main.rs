//! `mvmds`: manifold-valued MDS and srGW tools from the command line.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mvmds_core::{Error, ManifoldKind};

#[derive(Parser)]
#[command(name = "mvmds", version, about = "Embed finite metric spaces into manifolds with srGW warm starts")]
struct Cli {
    /// Worker threads for parallel sections; results do not depend on it.
    #[arg(long, global = true, env = "MVMDS_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// srGW warm start plus gradient descent on a distance matrix
    Embed(EmbedArgs),
    /// Solve srGW_2 from X into Y and report the distortion
    Srgw(SrgwArgs),
    /// Brute-force semi-relaxed and modified Gromov-Hausdorff distances
    Gh(GhArgs),
    /// Write synthetic distance matrices or plan ensembles
    Synth(SynthArgs),
    /// Embed a plan ensemble on a circle and summarize it by arcs
    Redistrict(RedistrictArgs),
    /// Render an embedding CSV as SVG (and a histogram for circles)
    Plot(PlotArgs),
}

#[derive(Args, Clone)]
pub struct OptimizerArgs {
    /// Adam learning rate
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_steps: usize,
    /// Stop once the relative stress change falls below this
    #[arg(long, default_value_t = 1e-3)]
    pub rel_threshold: f64,
}

#[derive(Args)]
pub struct EmbedArgs {
    /// Distance matrix CSV
    #[arg(long)]
    pub input: PathBuf,
    /// Optional point weights, one per row
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Target: circle:r=R, sphere:r=R or euclidean:d=D
    #[arg(long, default_value = "circle:r=1")]
    pub manifold: ManifoldKind,
    /// Learn the radius along with the points
    #[arg(long)]
    pub learn_scale: bool,
    /// Grid size for the srGW warm start
    #[arg(long, default_value_t = 100)]
    pub grid: usize,
    #[arg(long, default_value_t = 0.1)]
    pub jitter: f64,
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    pub optimizer: OptimizerArgs,
    /// Embedding CSV; metadata, SVG and histogram are written next to it
    #[arg(long, default_value = "emb.csv")]
    pub output: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum InitArg {
    Product,
    Random,
}

#[derive(Args)]
pub struct SrgwArgs {
    #[arg(long)]
    pub x: PathBuf,
    #[arg(long)]
    pub y: PathBuf,
    /// Weights on X, one per row
    #[arg(long)]
    pub x_weights: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    #[arg(long, value_enum, default_value_t = InitArg::Product)]
    pub init: InitArg,
    /// Cost evaluations for the map search after rounding; 0 turns it off
    #[arg(long, default_value_t = mvmds_core::srgw::DEFAULT_POLISH_BUDGET)]
    pub polish_budget: usize,
    /// Required with --init random
    #[arg(long)]
    pub seed: Option<u64>,
    /// Coupling CSV; a JSON sidecar is written next to it
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args)]
pub struct GhArgs {
    #[arg(long)]
    pub x: PathBuf,
    #[arg(long)]
    pub y: PathBuf,
    /// JSON report with both directions and the optimal maps
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args)]
pub struct SynthArgs {
    #[command(subcommand)]
    pub kind: SynthKind,
}

#[derive(Subcommand)]
pub enum SynthKind {
    /// Rotated copies of a random planar pattern
    Pattern {
        #[arg(long, default_value_t = 5)]
        anchors: usize,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        /// Make the pattern symmetric under a half turn
        #[arg(long)]
        two_fold: bool,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
    },
    /// Uniform samples on a manifold with optional distance noise
    Manifold {
        #[arg(long)]
        manifold: ManifoldKind,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
    },
    /// Random locations on the globe with WGS-84 distances in km
    Cities {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
    },
    /// A two-district plan ensemble over units on a ring
    Plans {
        #[arg(long, default_value_t = 50)]
        plans: usize,
        #[arg(long, default_value_t = 100)]
        units: usize,
        /// Per-unit label noise
        #[arg(long, default_value_t = 0.05)]
        flip: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
pub enum AlignArg {
    ArcFirst,
    EnsembleFirst,
}

#[derive(Args)]
pub struct RedistrictArgs {
    /// Plans CSV: header of unit ids, then plan id and labels per row
    #[arg(long)]
    pub plans: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub grid: usize,
    #[arg(long, default_value_t = 0.1)]
    pub jitter: f64,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 8)]
    pub arcs: usize,
    /// Reference for plans that do not lead their arc
    #[arg(long, value_enum, default_value_t = AlignArg::ArcFirst)]
    pub align: AlignArg,
    #[command(flatten)]
    pub optimizer: OptimizerArgs,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    #[arg(long, default_value = "redistrict")]
    pub prefix: String,
}

#[derive(Args)]
pub struct PlotArgs {
    /// Embedding CSV as written by `embed`
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Also write the circular-coordinate histogram here
    #[arg(long)]
    pub hist: Option<PathBuf>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Capacity(_) => 3,
        Error::Numerical { .. } => 4,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let outcome = match cli.command {
        Command::Embed(a) => commands::embed(&a),
        Command::Srgw(a) => commands::srgw(&a),
        Command::Gh(a) => commands::gh(&a),
        Command::Synth(a) => commands::synth(&a),
        Command::Redistrict(a) => commands::redistrict(&a),
        Command::Plot(a) => commands::plot(&a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::Numerical { trace, .. } = &e {
                let tail = &trace[trace.len().saturating_sub(10)..];
                eprintln!("last objective values: {tail:?}");
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
