use std::path::PathBuf;

use causenet::{EvidenceScope, Mode, VariableId};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

pub const CONFIG_ENV: &str = "CAUSENET_CONFIG";

#[derive(Parser, Debug)]
#[command(name = "causenet", version, about = "Weather/traffic causality networks: ingest, pair, learn, evaluate")]
pub struct Cli {
    /// TOML config whose values act as defaults for the flags.
    #[arg(long, global = true, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,

    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Parse and deduplicate raw weather and traffic logs.
    Ingest(IngestArgs),
    /// Find correlated event pairs and orient them into causal links.
    Pair(PairArgs),
    /// Turn entities and links into the two-slice binary dataset.
    BuildDataset(BuildDatasetArgs),
    /// Prune the skeleton and fit conditional probability tables.
    Learn(LearnArgs),
    /// Predict a target for every row of a dataset.
    Predict(PredictArgs),
    /// Per-city train/test evaluation against baselines.
    Evaluate(EvaluateArgs),
    /// Single-factor influence on a target.
    Analyze(AnalyzeArgs),
    /// Export the network as DOT.
    Visualize(VisualizeArgs),
}

impl Command {
    pub const NAMES: [&'static str; 8] =
        ["ingest", "pair", "build-dataset", "learn", "predict", "evaluate", "analyze", "visualize"];
}

#[derive(Args, Debug, Serialize)]
#[command(args_override_self = true)]
pub struct IngestArgs {
    #[arg(long)]
    pub weather: PathBuf,
    #[arg(long)]
    pub traffic: PathBuf,
    /// Output directory for the normalized entity files.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
#[command(args_override_self = true)]
pub struct PairArgs {
    /// Directory written by `ingest`.
    #[arg(long)]
    pub entities: PathBuf,
    /// Maximum start-time gap in seconds.
    #[arg(long, default_value_t = causenet::pairing::DEFAULT_T_THRESH_SECS)]
    pub t_thresh: i64,
    /// Maximum traffic-traffic distance in kilometers.
    #[arg(long, default_value_t = causenet::pairing::DEFAULT_D_THRESH_KM)]
    pub d_thresh: f64,
    /// Links file to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Binary,
    Leveled,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Binary => Mode::Binary,
            ModeArg::Leveled => Mode::Leveled,
        }
    }
}

#[derive(Args, Debug, Serialize)]
#[command(args_override_self = true)]
pub struct BuildDatasetArgs {
    /// Links file written by `pair`.
    #[arg(long)]
    pub pairs: PathBuf,
    /// Entity directory; defaults to the directory holding the links file.
    #[arg(long)]
    pub entities: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ModeArg::Binary)]
    pub mode: ModeArg,
    /// Also write one dataset per city.
    #[arg(long)]
    pub by_city: bool,
    /// Undersample the majority class of the target.
    #[arg(long)]
    pub balance: bool,
    /// Remove Tomek links before undersampling.
    #[arg(long, requires = "balance")]
    pub tomek: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "Accident_L")]
    pub target: VariableId,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorArg {
    Mle,
    Bayes,
}

#[derive(Args, Debug, Serialize)]
#[command(args_override_self = true)]
pub struct LearnArgs {
    /// Dataset file, or a directory written by `build-dataset`.
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, value_enum, default_value_t = EstimatorArg::Bayes)]
    pub estimator: EstimatorArg,
    #[arg(long, default_value_t = causenet::learning::DEFAULT_PSEUDO_COUNT)]
    pub pseudo_count: f64,
    /// Significance level for edge pruning.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Number of edge strength classes.
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ScopeArg {
    All,
    Neighbors,
}

impl From<ScopeArg> for EvidenceScope {
    fn from(s: ScopeArg) -> EvidenceScope {
        match s {
            ScopeArg::All => EvidenceScope::All,
            ScopeArg::Neighbors => EvidenceScope::Neighbors,
        }
    }
}

#[derive(Args, Debug, Serialize)]
#[command(args_override_self = true)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Dataset whose rows are predicted.
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long, default_value = "Accident_L")]
    pub target: VariableId,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Which of the row's variables are observed.
    #[arg(long, value_enum, default_value_t = ScopeArg::All)]
    pub scope: ScopeArg,
    /// Predictions CSV; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Baseline {
    Lr,
    Knn,
    Random,
}

#[derive(Args, Debug, Serialize)]
#[command(args_override_self = true)]
pub struct EvaluateArgs {
    /// Model from `learn`; its estimator and pruning alpha are reused.
    #[arg(long)]
    pub model: PathBuf,
    /// Directory written by `build-dataset`.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Cities to evaluate; all per-city files when omitted.
    #[arg(long, value_delimiter = ',')]
    pub cities: Option<Vec<String>>,
    /// Test rows per class as `YES,NO`.
    #[arg(long, default_value = "1000,1000")]
    pub spec: String,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "lr,knn")]
    pub baselines: Vec<Baseline>,
    /// Neighbors for the KNN baseline.
    #[arg(long, default_value_t = causenet::evaluation::DEFAULT_K)]
    pub knn_k: usize,
    #[arg(long, default_value = "Accident_L")]
    pub target: VariableId,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    #[arg(long, value_enum, default_value_t = ScopeArg::All)]
    pub scope: ScopeArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Metrics JSON; the text table always goes to standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
#[command(args_override_self = true)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value = "Accident_L")]
    pub target: VariableId,
    /// Factors to observe; the target's parents and children when omitted.
    #[arg(long, value_delimiter = ',')]
    pub factors: Option<Vec<VariableId>>,
    /// Influence report JSON; standard output only when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
#[command(args_override_self = true)]
pub struct VisualizeArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// `strong`, or `to:VAR` for the edges leading into VAR.
    #[arg(long)]
    pub filter: Option<String>,
    /// Threshold for `strong`; the weakest edge of the top class when omitted.
    #[arg(long)]
    pub min_chi2: Option<f64>,
    /// Number of linewidth classes.
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    /// Label override as `Type=Text`; repeatable.
    #[arg(long = "label")]
    pub labels: Vec<String>,
    /// DOT file; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
