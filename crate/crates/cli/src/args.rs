use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "kml", version, about = "Sesqui-holomorphic kernels, pulled-back metrics and invariance checks")]
pub struct Cli {
    #[command(flatten)]
    pub run: RunArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Kernel values and diagonals at points.
    Eval,
    /// Metric tensor, rank and profile verdicts at points.
    Metric,
    /// Run one verification check.
    Check {
        #[arg(value_enum)]
        kind: CheckKind,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckKind {
    Psd,
    Rescaling,
    Invariance,
    Cocycle,
    Unitarity,
    Kahler,
    Lengths,
    WeightedPower,
    MultiplierRigidity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightChoice {
    /// The extracted multiplier of the automorphism.
    Multiplier,
    /// The constant weight 1.
    One,
}

/// Flags shared by every command; embedded verbatim in reports.
#[derive(Debug, Clone, Args, Serialize)]
pub struct RunArgs {
    /// disk | polydisk:n | ball:n | full:n
    #[arg(long, global = true, default_value = "disk")]
    pub domain: String,
    /// Kernel DSL text.
    #[arg(long, global = true, default_value = "bergman")]
    pub kernel: String,
    /// Second kernel for rescaling and multiplier-rigidity checks.
    #[arg(long, global = true)]
    pub kernel2: Option<String>,
    /// euclidean | fubini-study | congruency:a,b
    #[arg(long, global = true, default_value = "fubini-study")]
    pub profile: String,
    /// Points as JSON, or a path to a JSON file.
    #[arg(long, global = true)]
    pub points: Option<String>,
    /// Curve as JSON, e.g. {"kind":"segment","a":[[0,0]],"b":[[0.5,0]]}.
    #[arg(long, global = true)]
    pub curve: Option<String>,
    /// Automorphism (or array of them) as JSON.
    #[arg(long, global = true)]
    pub auto: Option<String>,
    /// Second automorphism for the cocycle check.
    #[arg(long, global = true)]
    pub auto2: Option<String>,
    /// Check tolerance; each check has its own default.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Number of sampled points when none are given.
    #[arg(long, global = true, default_value_t = 24)]
    pub samples: usize,
    /// Largest sampling radius; defaults to the domain's own.
    #[arg(long, global = true)]
    pub radius: Option<f64>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Weight used by the unitarity check.
    #[arg(long, global = true, value_enum, default_value_t = WeightChoice::Multiplier)]
    pub weight: WeightChoice,
    /// Exponent of the weighted Bergman check.
    #[arg(long, global = true, default_value_t = 1.0)]
    pub alpha: f64,
    /// Series truncation of the weighted Bergman check.
    #[arg(long, global = true, default_value_t = 200)]
    pub truncation: usize,
    /// Meshes 2^k for k in mesh-min..=mesh-max (lengths check).
    #[arg(long, global = true, default_value_t = 4)]
    pub mesh_min: u32,
    #[arg(long, global = true, default_value_t = 12)]
    pub mesh_max: u32,
    /// Finite-difference step; automatic when omitted.
    #[arg(long, global = true)]
    pub step: Option<f64>,
}
