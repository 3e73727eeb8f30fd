use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "onebit-cdp",
    version,
    about = "Phase retrieval from one-bit coded diffraction patterns"
)]
pub struct Cli {
    /// Worker threads for parallel sections (default: available cores). Results do not depend on it.
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    pub threads: Option<u16>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a one-bit measurement set and write it to a binary container
    Simulate(SimulateArgs),
    /// Recover a signal from a measurement container
    Recover(RecoverArgs),
    /// Estimate the signal-to-noise constant lambda of an observation model
    Lambda(LambdaArgs),
    /// Run a benchmark protocol and write a CSV table
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Recover a PGM/PPM image channel by channel
    Image(ImageArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    Identity,
    ExpNoise,
    Poisson,
    Tanh,
    Lowpass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PsfKind {
    /// Unit magnitude on the band
    Flat,
    /// Box filter of --psf-width taps per axis
    Average,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Observation model applied to the intensities
    #[arg(long, value_enum, default_value_t = ModelKind::Identity)]
    pub model: ModelKind,
    /// Exponential-noise variance sigma (exp-noise)
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Poisson scale eta (poisson)
    #[arg(long)]
    pub eta: Option<f64>,
    /// Clipping level alpha (tanh)
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Cut-off frequency f_c in array-index units (lowpass; excludes --srf)
    #[arg(long, conflicts_with = "srf")]
    pub cutoff: Option<usize>,
    /// Super-resolution factor n/|band|; picks the largest cut-off reaching it (lowpass)
    #[arg(long)]
    pub srf: Option<f64>,
    /// In-band PSF magnitudes (lowpass)
    #[arg(long, value_enum, default_value_t = PsfKind::Flat)]
    pub psf: PsfKind,
    /// Box filter width in taps for --psf average
    #[arg(long, default_value_t = 2)]
    pub psf_width: usize,
    /// Draw fresh PSF magnitudes in [0.05, 1] for every mask pair (lowpass)
    #[arg(long)]
    pub vary_psf: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MaskArg {
    /// Complex Gaussian entries with E|w|^2 = 1
    Gaussian,
    /// Entries 0 or 1/sqrt(p)
    Bernoulli,
}

#[derive(Debug, Clone, Args)]
pub struct MaskArgs {
    /// Mask distribution
    #[arg(long, value_enum, default_value_t = MaskArg::Gaussian)]
    pub mask: MaskArg,
    /// Probability of a non-zero Bernoulli entry
    #[arg(long, default_value_t = 0.5)]
    pub p: f64,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Signal length for 1D data
    #[arg(long, required_unless_present = "height", conflicts_with = "height")]
    pub n: Option<usize>,
    /// Grid height for 2D data (requires --width)
    #[arg(long, requires = "width")]
    pub height: Option<usize>,
    /// Grid width for 2D data
    #[arg(long, requires = "height")]
    pub width: Option<usize>,
    /// Number of mask pairs r
    #[arg(long)]
    pub pairs: usize,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub mask: MaskArgs,
    /// Base seed
    #[arg(long)]
    pub seed: u64,
    /// Output container path
    #[arg(long)]
    pub out: PathBuf,
    /// Store the ground-truth signal in the container
    #[arg(long)]
    pub save_truth: bool,
    /// Store the raw intensities (needed by subexp and am)
    #[arg(long)]
    pub keep_intensities: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    /// Power method on the one-bit operator
    Onebit,
    /// Power method on the SubExp operator
    Subexp,
    /// Alternating minimization from --init
    Am,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitArg {
    Onebit,
    Subexp,
    Random,
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    /// Power-method stopping tolerance on the phase-aligned step length
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    /// Power-method iteration cap
    #[arg(long, default_value_t = 10_000)]
    pub max_iter: usize,
    /// Alternating-minimization iterations
    #[arg(long, default_value_t = 50)]
    pub t0: usize,
}

#[derive(Debug, Args)]
pub struct RecoverArgs {
    /// Measurement container written by `simulate`
    #[arg(long = "in", value_name = "PATH")]
    pub input: PathBuf,
    /// Recovery method
    #[arg(long, value_enum, default_value_t = MethodArg::Onebit)]
    pub method: MethodArg,
    /// Starting point for --method am
    #[arg(long, value_enum, default_value_t = InitArg::Onebit)]
    pub init: InitArg,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Seed of the random power-method start
    #[arg(long)]
    pub seed: u64,
    /// Output result path
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct LambdaArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Signal length (only matters for lowpass)
    #[arg(long, default_value_t = 16)]
    pub n: usize,
    /// Monte-Carlo sample count (at least 1000)
    #[arg(long, default_value_t = 1_000_000)]
    pub samples: usize,
    /// Monte-Carlo seed
    #[arg(long)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    /// Signal length
    #[arg(long, default_value_t = 128)]
    pub n: usize,
    /// Trials per cell
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    /// Success threshold on 1 - |<x, x0>|^2
    #[arg(long, default_value_t = 0.07)]
    pub tau: f64,
    /// Base seed; trial t of a cell with r pairs uses derive(seed, [r, t])
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Output CSV path
    #[arg(long)]
    pub out: PathBuf,
    /// Fill the wall_ms column with measured times (output is then not reproducible)
    #[arg(long)]
    pub timestamp: bool,
}

#[derive(Debug, Subcommand)]
pub enum BenchCommand {
    /// Success probability versus r for each init kind
    Transition(TransitionArgs),
    /// Median error versus a model parameter
    Robustness(RobustnessArgs),
    /// Median error of AM per iteration
    AmDecay(DecayArgs),
}

#[derive(Debug, Args)]
pub struct TransitionArgs {
    #[command(flatten)]
    pub grid: GridArgs,
    /// Comma-separated numbers of mask pairs
    #[arg(long, value_delimiter = ',', default_values_t = [2usize, 4, 8, 16, 32, 64])]
    pub r: Vec<usize>,
    /// Comma-separated init kinds
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [InitArg::Onebit, InitArg::Subexp])]
    pub inits: Vec<InitArg>,
    /// Refine every initialization with --t0 AM iterations
    #[arg(long)]
    pub refine_am: bool,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub mask: MaskArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepArg {
    Sigma,
    Alpha,
    Eta,
    Srf,
}

#[derive(Debug, Args)]
pub struct RobustnessArgs {
    #[command(flatten)]
    pub grid: GridArgs,
    /// Comma-separated numbers of mask pairs
    #[arg(long, value_delimiter = ',', default_values_t = [20usize])]
    pub r: Vec<usize>,
    /// Swept model parameter
    #[arg(long, value_enum)]
    pub param: SweepArg,
    /// Comma-separated parameter values
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<f64>,
    /// For --param srf: multiply r by round(SRF^2)
    #[arg(long)]
    pub scale_r: bool,
    /// For --param srf: in-band PSF magnitudes
    #[arg(long, value_enum, default_value_t = PsfKind::Flat)]
    pub psf: PsfKind,
    /// Box filter width in taps for --psf average
    #[arg(long, default_value_t = 2)]
    pub psf_width: usize,
}

#[derive(Debug, Args)]
pub struct DecayArgs {
    #[command(flatten)]
    pub grid: GridArgs,
    /// Number of mask pairs
    #[arg(long, default_value_t = 8)]
    pub r: usize,
    /// Comma-separated init kinds
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [InitArg::Onebit, InitArg::Random])]
    pub inits: Vec<InitArg>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub mask: MaskArgs,
}

#[derive(Debug, Args)]
pub struct ImageArgs {
    /// Input PGM (P5) or PPM (P6), 8-bit
    #[arg(long = "in", value_name = "PATH")]
    pub input: PathBuf,
    /// Output image path, same format as the input
    #[arg(long)]
    pub out: PathBuf,
    /// key=value metadata path (default: <out>.meta)
    #[arg(long)]
    pub metadata: Option<PathBuf>,
    /// Number of mask pairs per channel
    #[arg(long)]
    pub pairs: usize,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub mask: MaskArgs,
    /// Spectral initialization
    #[arg(long, value_enum, default_value_t = InitArg::Onebit)]
    pub init: InitArg,
    /// Refine with --t0 AM iterations
    #[arg(long)]
    pub refine_am: bool,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Base seed; channel c uses derive(seed, c)
    #[arg(long)]
    pub seed: u64,
    /// Add a timestamp line to the metadata (output is then not reproducible)
    #[arg(long)]
    pub timestamp: bool,
}
