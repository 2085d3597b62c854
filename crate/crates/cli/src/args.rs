use bellcheck::exact::Ordering;
use bellcheck::extract::BitFormat;
use bellcheck::lhv::BiasDist;
use bellcheck::BetaForm;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

#[derive(Debug, Parser, Serialize)]
#[command(name = "bellcheck", version, about = "Analysis and simulation toolkit for event-ready CHSH Bell tests")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Serialize)]
pub struct Global {
    /// Seed for all random draws [default: 0]
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Monte Carlo repetitions (or adversary runs)
    #[arg(long, global = true)]
    pub reps: Option<usize>,
    /// Output file [default: stdout]
    #[arg(long, global = true)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
    /// Report format [default: json]
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// TOML config file; flags take precedence over its values
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BetaFormArg {
    Lemma,
    Expanded,
}

impl From<BetaFormArg> for BetaForm {
    fn from(f: BetaFormArg) -> Self {
        match f {
            BetaFormArg::Lemma => BetaForm::Lemma,
            BetaFormArg::Expanded => BetaForm::Expanded,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrderingArg {
    Probability,
    ChiSquare,
}

impl From<OrderingArg> for Ordering {
    fn from(o: OrderingArg) -> Self {
        match o {
            OrderingArg::Probability => Ordering::Probability,
            OrderingArg::ChiSquare => Ordering::ChiSquare,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
pub enum BitFormatArg {
    Ascii,
    Packed,
}

impl From<BitFormatArg> for BitFormat {
    fn from(f: BitFormatArg) -> Self {
        match f {
            BitFormatArg::Ascii => BitFormat::Ascii,
            BitFormatArg::Packed => BitFormat::Packed,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
pub enum BiasDistArg {
    Point,
    TwoPoint,
    Uniform,
}

impl BiasDistArg {
    pub fn with_mean(self, tau: f64) -> BiasDist {
        match self {
            BiasDistArg::Point => BiasDist::Point(tau),
            BiasDistArg::TwoPoint => BiasDist::TwoPoint(tau),
            BiasDistArg::Uniform => BiasDist::Uniform(tau),
        }
    }
}

/// Generator imperfections entering the winning-probability bound.
#[derive(Debug, Args, Serialize)]
pub struct BiasArgs {
    /// Early-number probability f [default: 0]
    #[arg(long)]
    pub f: Option<f64>,
    /// Mean setting bias τ [default: 0]
    #[arg(long)]
    pub tau: Option<f64>,
    /// Form of the bound [default: lemma]
    #[arg(long, value_enum)]
    pub beta_form: Option<BetaFormArg>,
}

#[derive(Debug, Subcommand, Serialize)]
pub enum Command {
    /// S, k, n, correlators and P-values of a trials file
    Analyze {
        /// Trials in JSON-lines format
        trials: PathBuf,
        #[command(flatten)]
        bias: BiasArgs,
    },
    /// Combine the P-values of several runs
    Combine {
        #[command(subcommand)]
        mode: CombineMode,
    },
    /// Winning-probability bounds and the P-value versus τ curve
    Bound {
        #[command(flatten)]
        bias: BiasArgs,
        /// Heralded trials, for the P-value curve
        #[arg(long, requires = "k")]
        n: Option<u64>,
        /// Wins, for the P-value curve
        #[arg(long, requires = "n")]
        k: Option<u64>,
        #[arg(long, default_value_t = 0.01)]
        tau_max: f64,
        #[arg(long, default_value_t = 100)]
        tau_steps: usize,
        /// Also write the curve as CSV here
        #[arg(long)]
        curve_out: Option<PathBuf>,
    },
    /// Generate trials or run the adversary suite
    Simulate {
        #[command(subcommand)]
        what: SimulateCmd,
    },
    /// Station-C heralding: synthetic streams, classification, window sweeps
    Herald {
        #[command(subcommand)]
        what: HeraldCmd,
    },
    /// Bit extraction from text, bias, XOR combiner, independence
    Rng {
        #[command(subcommand)]
        what: RngCmd,
    },
    /// Uniformity and independence audit of setting choices
    #[command(group(clap::ArgGroup::new("input").required(true)))]
    Audit {
        /// Setting-pair counts n00,n01,n10,n11
        #[arg(long, group = "input")]
        counts: Option<String>,
        /// JSON file with fields n00, n01, n10, n11
        #[arg(long, group = "input")]
        counts_json: Option<PathBuf>,
        /// JSON-lines settings stream (trial files work too)
        #[arg(long, group = "input")]
        settings: Option<PathBuf>,
        /// Count attempts tagged 0 too
        #[arg(long)]
        #[arg(long)]
        all_attempts: bool,
        #[arg(long, default_value = "dataset")]
        label: String,
        /// Extremeness ordering of the multinomial test [default: probability]
        #[arg(long, value_enum)]
        ordering: Option<OrderingArg>,
        /// Repetitions of the look-elsewhere simulation
        #[arg(long, default_value_t = 10_000)]
        lee_reps: usize,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Joint false-positive target for the per-test threshold
        #[arg(long, default_value_t = 0.05)]
        target: f64,
    },
}

#[derive(Debug, Subcommand, Serialize)]
pub enum CombineMode {
    /// Fisher's method over complete-analysis P-values
    Fisher {
        #[arg(long = "p")]
        pvalues: Vec<f64>,
        /// Reports written by `analyze` or `combine`
        #[arg(long = "report")]
        reports: Vec<PathBuf>,
    },
    /// Complete analysis of the pooled counts
    Merge {
        /// Run counts as n,k
        #[arg(long = "run")]
        runs: Vec<String>,
        /// Reports written by `analyze`
        #[arg(long = "report")]
        reports: Vec<PathBuf>,
        #[command(flatten)]
        bias: BiasArgs,
    },
}

#[derive(Debug, Subcommand, Serialize)]
pub enum SimulateCmd {
    /// One local-hidden-variable experiment, written as trials
    Lhv {
        /// Catalogue name or deterministic:<χ0χ1γ0γ1>
        #[arg(long, default_value = "bias-exploit")]
        strategy: String,
        #[arg(long)]
        attempts: u64,
        #[arg(long)]
        stop_after_heralds: Option<u64>,
        #[command(flatten)]
        bias: BiasArgs,
        #[arg(long, value_enum, default_value = "point")]
        bias_dist: BiasDistArg,
    },
    /// I.i.d. trials at fixed per-state winning probabilities
    Reference {
        #[arg(long)]
        win_psi_minus: Option<f64>,
        #[arg(long)]
        win_psi_plus: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        herald_rate: f64,
        #[arg(long, default_value_t = 0.5)]
        psi_plus_fraction: f64,
        #[arg(long)]
        attempts: u64,
    },
    /// False-rejection rate of the complete analysis against adaptive adversaries
    Adversary {
        #[arg(long, default_value_t = 100)]
        n: u64,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Comma-separated strategy names [default: whole catalogue]
        #[arg(long, value_delimiter = ',')]
        strategies: Vec<String>,
        #[command(flatten)]
        bias: BiasArgs,
        #[arg(long, value_enum, default_value = "point")]
        bias_dist: BiasDistArg,
    },
}

#[derive(Debug, Subcommand, Serialize)]
pub enum HeraldCmd {
    /// Synthetic detections plus settings and outcomes for every attempt
    Synth {
        #[arg(long)]
        attempts: u64,
        #[arg(long)]
        window_config: Option<PathBuf>,
        /// TOML file of stream parameters
        #[arg(long)]
        stream_config: Option<PathBuf>,
        /// Winning probability of truly entangled attempts
        #[arg(long, default_value_t = 0.8)]
        win: f64,
        /// Where to write the detections CSV
        #[arg(long)]
        detections: PathBuf,
        /// Where to write the trial records
        #[arg(long)]
        trials: PathBuf,
    },
    /// Herald tags from detections
    Classify {
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        window_config: Option<PathBuf>,
        /// Retag these trials and write them instead of a tag table
        #[arg(long)]
        trials: Option<PathBuf>,
    },
    /// S, n, k and local P-value versus window-start offset
    Sweep {
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        trials: PathBuf,
        #[arg(long)]
        window_config: Option<PathBuf>,
        /// start:stop:step in picoseconds, stop inclusive
        #[arg(long, allow_hyphen_values = true)]
        offsets: String,
        #[command(flatten)]
        bias: BiasArgs,
    },
}

#[derive(Debug, Subcommand, Serialize)]
pub enum RngCmd {
    /// One parity bit per message line
    Extract {
        messages: PathBuf,
        #[arg(long, default_value_t = bellcheck::extract::MAX_MESSAGE_CHARS)]
        max_chars: usize,
        #[arg(long, value_enum, default_value = "ascii")]
        bit_format: BitFormatArg,
    },
    /// Bias and its statistical uncertainty
    Bias {
        bits: PathBuf,
        /// Combine consecutive 8-bit blocks first
        #[arg(long)]
        block8: bool,
        #[arg(long, value_enum, default_value = "ascii")]
        bit_format: BitFormatArg,
    },
    /// XOR each 8-bit classical block with one quantum bit
    Combine {
        #[arg(long)]
        classical: PathBuf,
        #[arg(long)]
        quantum: PathBuf,
        #[arg(long, value_enum, default_value = "ascii")]
        bit_format: BitFormatArg,
    },
    /// Fisher exact test of independence between index-paired bits
    Independence {
        a: PathBuf,
        b: PathBuf,
        /// Cut the longer stream to the shorter one's length
        #[arg(long)]
        truncate: bool,
        #[arg(long, value_enum, default_value = "ascii")]
        bit_format: BitFormatArg,
    },
}
