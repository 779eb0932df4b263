use std::collections::HashMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use provlens_cli::io::{read_json, read_jsonl, write_jsonl, write_text};
use provlens_cli::{
    attribute_records, build_features, group_tokens, synth_records, write_features_csv,
    AnalysisRecord, CliError, Result, SynthOptions, TagSidecar, Tagging, TokenRecord, DEMO_WORDS,
};
use provlens_core::model::{
    load_model, write_toy_model, DType, FfnKind, ModelConfig, NormKind, PositionKind, ToyOptions,
};
use provlens_detector::{
    feature_importance, protocol_nested_loocv, protocol_standard, protocol_stratified_kfold,
    search_and_fit, Dataset, DetectorModel, IsolationGuard, ProtocolOptions, SearchGrid,
};

#[derive(Parser)]
#[command(name = "provlens", version, about = "Token-probability source attribution and hallucination detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded random model in the canonical format.
    GenToy(GenToyArgs),
    /// Write synthetic analysis records over the demo vocabulary.
    Synth(SynthArgs),
    /// Attribute every response token of every record.
    Attribute(AttributeArgs),
    /// Aggregate token attributions into POS feature rows.
    Features(FeaturesArgs),
    /// Search hyperparameters and fit a detector on a feature CSV.
    Train(TrainArgs),
    /// Evaluate the detector under one of the three protocols.
    Evaluate(EvaluateArgs),
    /// Print a trained model's feature importance and provenance.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenToyArgs {
    #[arg(long, default_value_t = 2)]
    layers: usize,
    #[arg(long, default_value_t = 2)]
    heads: usize,
    #[arg(long, default_value_t = 32)]
    dim: usize,
    #[arg(long, default_value_t = 128)]
    vocab: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Norm::Layernorm)]
    norm: Norm,
    #[arg(long, value_enum, default_value_t = Position::Learned)]
    position: Position,
    #[arg(long, value_enum, default_value_t = Ffn::Gelu)]
    ffn: Ffn,
    /// Store a separate unembedding matrix.
    #[arg(long)]
    untied: bool,
    /// Store weights as 64-bit floats.
    #[arg(long)]
    f64: bool,
    #[arg(long, default_value_t = 1.0)]
    weight_scale: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Norm {
    Layernorm,
    Rmsnorm,
}

#[derive(Clone, Copy, ValueEnum)]
enum Position {
    Learned,
    Rotary,
    None,
}

#[derive(Clone, Copy, ValueEnum)]
enum Ffn {
    Gelu,
    Gated,
}

#[derive(Args)]
struct ModelArg {
    /// Model directory.
    #[arg(long, env = "PROVLENS_MODEL")]
    model: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    model: ModelArg,
    #[arg(long, default_value_t = 30)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.5)]
    positive_rate: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AttributeArgs {
    #[command(flatten)]
    model: ModelArg,
    /// Analysis records, one JSON object per line.
    #[arg(long)]
    records: PathBuf,
    /// Include per-layer head and source breakdowns.
    #[arg(long)]
    per_layer: bool,
    /// Process records on all cores. Output order is unchanged.
    #[arg(long)]
    parallel: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FeaturesArgs {
    /// Token attributions written by `attribute`.
    #[arg(long)]
    attributions: PathBuf,
    /// The records the attributions were computed from.
    #[arg(long)]
    records: PathBuf,
    /// Tagged words per record, one `{"id", "words"}` object per line.
    #[arg(long, conflicts_with = "fallback_tagger", required_unless_present = "fallback_tagger")]
    tags: Option<PathBuf>,
    /// Use the built-in rule-based tagger instead of a sidecar.
    #[arg(long)]
    fallback_tagger: bool,
    /// Plant a synthetic signal of this strength in records labeled 1.
    #[arg(long)]
    plant: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SearchArgs {
    /// JSON search grid; omitted axes use the defaults.
    #[arg(long)]
    grid: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    n_iters: usize,
    #[arg(long, default_value_t = 5)]
    inner_folds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Pick the threshold on the validation slice instead of 0.5.
    #[arg(long)]
    tune_threshold: bool,
}

impl SearchArgs {
    fn options(&self) -> Result<ProtocolOptions> {
        let grid: SearchGrid = match &self.grid {
            Some(p) => read_json(p)?,
            None => SearchGrid::default(),
        };
        Ok(ProtocolOptions {
            grid,
            n_iters: self.n_iters,
            inner_folds: self.inner_folds,
            seed: self.seed,
            tune_threshold: self.tune_threshold,
            ..Default::default()
        })
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    features: PathBuf,
    #[command(flatten)]
    search: SearchArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Protocol {
    /// Search and fit on the features file, score `--test`.
    Split,
    /// Stratified k-fold with a fresh search per fold.
    Kfold,
    /// Nested leave-one-out.
    Loocv,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long, value_enum)]
    protocol: Protocol,
    /// Held-out feature CSV for the split protocol.
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    k: usize,
    #[command(flatten)]
    search: SearchArgs,
    /// Report JSON.
    #[arg(long)]
    out: PathBuf,
    /// Also write the final model (split protocol only).
    #[arg(long)]
    model_out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Model JSON written by `train`.
    #[arg(long)]
    model: PathBuf,
    /// Number of features to list.
    #[arg(long, default_value_t = 20)]
    top: usize,
}

fn gen_toy(a: GenToyArgs) -> Result<()> {
    let config = ModelConfig {
        norm_kind: match a.norm {
            Norm::Layernorm => NormKind::Layernorm,
            Norm::Rmsnorm => NormKind::Rmsnorm,
        },
        position_kind: match a.position {
            Position::Learned => PositionKind::LearnedAbsolute,
            Position::Rotary => PositionKind::Rotary,
            Position::None => PositionKind::None,
        },
        ffn_kind: match a.ffn {
            Ffn::Gelu => FfnKind::Gelu,
            Ffn::Gated => FfnKind::Gated,
        },
        tied_embeddings: !a.untied,
        ..ModelConfig::toy(a.layers, a.heads, a.dim, a.vocab)
    };
    let words = if a.vocab >= DEMO_WORDS.len() {
        DEMO_WORDS.iter().map(|w| w.to_string()).collect()
    } else {
        Vec::new()
    };
    let opts = ToyOptions {
        words,
        weight_scale: a.weight_scale,
        dtype: if a.f64 { DType::F64 } else { DType::F32 },
    };
    write_toy_model(&config, a.seed, &opts, &a.out)?;
    Ok(())
}

fn synth(a: SynthArgs) -> Result<()> {
    let model = load_model(&a.model.model)?;
    let opts = SynthOptions {
        n_records: a.n,
        seed: a.seed,
        positive_rate: a.positive_rate,
    };
    let records = synth_records(&model.vocab, &opts)?;
    write_jsonl(&a.out, &records)
}

fn attribute(a: AttributeArgs) -> Result<()> {
    let model = load_model(&a.model.model)?;
    let records: Vec<AnalysisRecord> = read_jsonl(&a.records)?;
    let tokens = attribute_records(&model, &records, a.per_layer, a.parallel)?;
    write_jsonl(&a.out, tokens.iter().flatten())
}

fn features(a: FeaturesArgs) -> Result<()> {
    let records: Vec<AnalysisRecord> = read_jsonl(&a.records)?;
    let tokens: Vec<TokenRecord> = read_jsonl(&a.attributions)?;
    let sidecar: Option<HashMap<_, _>> = match &a.tags {
        Some(p) => Some(
            read_jsonl::<TagSidecar>(p)?
                .into_iter()
                .map(|s| (s.id, s.words))
                .collect(),
        ),
        None => None,
    };
    let tagging = match &sidecar {
        Some(map) => Tagging::Sidecar(map),
        None => Tagging::Fallback,
    };
    let rows = build_features(&records, &group_tokens(tokens), &tagging, a.plant)?;
    let file = std::fs::File::create(&a.out).map_err(|e| CliError::Io {
        path: a.out.clone(),
        source: e,
    })?;
    write_features_csv(file, &rows)
}

fn train(a: TrainArgs) -> Result<()> {
    let data = Dataset::read_csv(&a.features)?;
    let opts = a.search.options()?;
    let (mut model, _) = search_and_fit(&data, &data.all_indices(), &opts, &IsolationGuard::default())?;
    model.provenance.protocol = "train".into();
    write_text(&a.out, &(model.to_json()? + "\n"))
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let opts = a.search.options()?;
    let data = Dataset::read_csv(&a.features)?;
    let report = match a.protocol {
        Protocol::Split => {
            let test_path = a
                .test
                .as_ref()
                .ok_or_else(|| CliError::Usage("--test is required for the split protocol".into()))?;
            let test = Dataset::read_csv(test_path)?;
            let (joined, train_idx, test_idx) = concat(data, test)?;
            let (report, model) = protocol_standard(&joined, &train_idx, &test_idx, &opts)?;
            if let Some(p) = &a.model_out {
                write_text(p, &(model.to_json()? + "\n"))?;
            }
            report
        }
        Protocol::Kfold => protocol_stratified_kfold(&data, a.k, &opts)?,
        Protocol::Loocv => protocol_nested_loocv(&data, &opts)?,
    };
    write_text(&a.out, &(report.to_json()? + "\n"))?;
    print!("{}", report.to_table());
    Ok(())
}

/// Stacks train and test rows, returning the joined set and each side's indices.
fn concat(train: Dataset, test: Dataset) -> Result<(Dataset, Vec<usize>, Vec<usize>)> {
    if train.feature_names != test.feature_names {
        return Err(CliError::Usage("train and test feature columns differ".into()));
    }
    let n_train = train.len();
    let n_test = test.len();
    let joined = Dataset::new(
        train.ids.into_iter().chain(test.ids).collect(),
        train.feature_names,
        train.rows.into_iter().chain(test.rows).collect(),
        train.labels.into_iter().chain(test.labels).collect(),
    )?;
    Ok((joined, (0..n_train).collect(), (n_train..n_train + n_test).collect()))
}

fn report(a: ReportArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.model).map_err(|e| CliError::Io {
        path: a.model.clone(),
        source: e,
    })?;
    let model = DetectorModel::from_json(&text)?;
    print!("{}", render_report(&model, a.top));
    Ok(())
}

fn render_report(model: &DetectorModel, top: usize) -> String {
    let table = feature_importance(model);
    let width = table.iter().take(top).map(|(n, _)| n.len()).max().unwrap_or(7).max(7);
    let mut out = format!("{:<width$}  gain\n", "feature");
    for (name, gain) in table.iter().take(top) {
        out.push_str(&format!("{name:<width$}  {gain:.6}\n"));
    }
    let p = &model.provenance;
    out.push_str(&format!(
        "\nprotocol {}  seed {}  trees {}  threshold {:.4}\ntrain {} ({} neg / {} pos)  validation {}  class weight {:.4}\n",
        p.protocol,
        p.seed,
        model.trees.len(),
        model.threshold,
        p.n_train,
        p.n_negative,
        p.n_positive,
        p.n_validation,
        model.class_weight
    ));
    out
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenToy(a) => gen_toy(a),
        Command::Synth(a) => synth(a),
        Command::Attribute(a) => attribute(a),
        Command::Features(a) => features(a),
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Report(a) => report(a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}

