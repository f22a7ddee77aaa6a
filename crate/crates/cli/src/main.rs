use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use cairo_core::bench::{run_bench, BenchConfig};
use cairo_core::data::{
    load_column_csv, load_csv, load_features_csv, write_column_csv, write_columns_csv, write_csv,
    SplitSpec, TARGET_COLUMN,
};
use cairo_core::dgp::{generate, HeavyTailNoise, Scenario, ScenarioSpec};
use cairo_core::losses::{LossSpec, WeightVariant};
use cairo_core::metrics::EvalReport;
use cairo_core::pipeline::{cairo_fit_traced, FittedModel, ModelBundle, ModelKind};
use cairo_core::scorer::{RankGapScope, TrainConfig};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

const EVAL_VERSION: &str = "cairo-eval-v1";
const PREDICTION_COLUMN: &str = "prediction";

#[derive(Parser)]
#[command(name = "cairo", version, about = "Rank-then-calibrate regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a synthetic dataset and write it as CSV.
    Simulate(SimulateArgs),
    /// Fit a model on a CSV dataset and write the model JSON.
    Fit(FitArgs),
    /// Predict with a fitted model.
    Predict(PredictArgs),
    /// Score predictions against observed targets.
    Eval(EvalArgs),
    /// Run the synthetic benchmark.
    Bench(BenchArgs),
}

/// Usage errors exit with 2, everything else with 1.
enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Runtime(e.into())
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn usage(msg: impl std::fmt::Display) -> Failure {
    Failure::Usage(anyhow!("{msg}"))
}

fn serde_name<T: DeserializeOwned>(s: &str) -> std::result::Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_owned())).map_err(|e| e.to_string())
}

fn parse_scenario(s: &str) -> std::result::Result<Scenario, String> {
    s.parse().map_err(|e: cairo_core::CairoError| e.to_string())
}

fn parse_model(s: &str) -> std::result::Result<ModelKind, String> {
    s.parse().map_err(|e: cairo_core::CairoError| e.to_string())
}

fn read_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> CliResult<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))
        .map_err(Failure::Usage)?;
    serde_json::from_str(&text)
        .with_context(|| format!("invalid config {}", path.display()))
        .map_err(Failure::Usage)
}

fn to_json<T: Serialize>(value: &T) -> anyhow::Result<serde_json::Value> {
    Ok(serde_json::to_value(value)?)
}

fn write_json(path: &Path, value: &serde_json::Value) -> anyhow::Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")
        .with_context(|| format!("cannot write {}", path.display()))
}

#[derive(Args, Default)]
struct TrainFlags {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// `batch` or `full-training-set`.
    #[arg(long, value_parser = serde_name::<RankGapScope>)]
    rank_gap_scope: Option<RankGapScope>,
}

impl TrainFlags {
    fn apply(&self, cfg: &mut TrainConfig) {
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.learning_rate {
            cfg.adam.learning_rate = v;
        }
        if let Some(v) = self.rank_gap_scope {
            cfg.rank_gap_scope = v;
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_parser = parse_scenario)]
    scenario: Option<Scenario>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Log-scale standard deviation of the heavy-tail noise.
    #[arg(long)]
    lognormal_sigma: Option<f64>,
    /// Subtract the lognormal mean from the heavy-tail noise.
    #[arg(long)]
    centered_lognormal: bool,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SimulateConfig {
    scenario: Scenario,
    n: usize,
    d: usize,
    seed: u64,
    heavy_tail: HeavyTailNoise,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::Normal,
            n: 6000,
            d: 10,
            seed: 0,
            heavy_tail: HeavyTailNoise::default(),
        }
    }
}

fn cmd_simulate(args: SimulateArgs) -> CliResult<()> {
    let mut cfg: SimulateConfig = read_config(args.config.as_deref())?;
    if let Some(v) = args.scenario {
        cfg.scenario = v;
    }
    if let Some(v) = args.n {
        cfg.n = v;
    }
    if let Some(v) = args.d {
        cfg.d = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.lognormal_sigma {
        cfg.heavy_tail.sigma = v;
    }
    if args.centered_lognormal {
        cfg.heavy_tail.centered = true;
    }
    let spec = ScenarioSpec {
        scenario: cfg.scenario,
        n: cfg.n,
        d: cfg.d,
        seed: cfg.seed,
        heavy_tail: cfg.heavy_tail,
    };
    spec.validate().map_err(usage)?;
    let ds = generate(&spec)?;
    write_csv(&ds, &args.out)?;
    Ok(())
}

#[derive(Args)]
struct FitArgs {
    /// Training CSV.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_parser = parse_model)]
    model: Option<ModelKind>,
    /// Name of the target column.
    #[arg(long)]
    target: Option<String>,
    /// The CSV has no header row; columns are named by position.
    #[arg(long)]
    no_header: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    train: TrainFlags,
    /// Pair weights of the pairwise objectives.
    #[arg(long, value_parser = serde_name::<WeightVariant>)]
    weight: Option<WeightVariant>,
    /// Slope of the pairwise log-sigmoid.
    #[arg(long)]
    sigma: Option<f64>,
    /// Softrank temperature of the Gini objective.
    #[arg(long)]
    temperature: Option<f64>,
    /// Fraction of rows used to train the scorer; the rest fit the calibration.
    #[arg(long)]
    calibration_holdout: Option<f64>,
    /// Directory for the score/target/calibration point sets and loss curve.
    #[arg(long)]
    emit_plot_data: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FitConfig {
    model: ModelKind,
    target: String,
    has_header: bool,
    /// Replaces the model's default objective (two-stage models only).
    loss: Option<LossSpec>,
    train: TrainConfig,
    calibration_holdout: Option<f64>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::CairoRankNet,
            target: TARGET_COLUMN.to_owned(),
            has_header: true,
            loss: None,
            train: TrainConfig::default(),
            calibration_holdout: None,
        }
    }
}

impl FitConfig {
    fn from_args(args: &FitArgs) -> CliResult<Self> {
        let mut cfg: FitConfig = read_config(args.config.as_deref())?;
        if let Some(v) = args.model {
            cfg.model = v;
        }
        if let Some(v) = &args.target {
            cfg.target = v.clone();
        }
        if args.no_header {
            cfg.has_header = false;
        }
        if let Some(v) = args.seed {
            cfg.train.seed = v;
        }
        args.train.apply(&mut cfg.train);
        if let Some(v) = args.calibration_holdout {
            cfg.calibration_holdout = Some(v);
        }

        let mut loss = cfg.loss.unwrap_or_else(|| cfg.model.loss());
        if cfg.model == ModelKind::NnMse {
            if cfg.loss.is_some()
                || args.weight.is_some()
                || args.sigma.is_some()
                || args.temperature.is_some()
            {
                return Err(usage("objective settings do not apply to nn-mse"));
            }
            if cfg.calibration_holdout.is_some() {
                return Err(usage("nn-mse has no calibration stage"));
            }
        } else if !loss.is_ranking() {
            return Err(usage("two-stage models need a ranking objective"));
        }
        match &mut loss {
            LossSpec::PairwiseSurrogate { variant, sigma } => {
                if args.temperature.is_some() {
                    return Err(usage(
                        "--temperature applies only to the softrank Gini objective",
                    ));
                }
                if let Some(v) = args.weight {
                    *variant = v;
                }
                if let Some(v) = args.sigma {
                    *sigma = v;
                }
            }
            LossSpec::SoftGini { temperature } => {
                if args.weight.is_some() || args.sigma.is_some() {
                    return Err(usage(
                        "--weight and --sigma apply only to pairwise objectives",
                    ));
                }
                if let Some(v) = args.temperature {
                    *temperature = v;
                }
            }
            LossSpec::PointwiseMse => {}
        }
        if cfg.model != ModelKind::NnMse {
            cfg.loss = Some(loss);
        }
        cfg.train = cfg.train.with_loss(loss);
        cfg.train.validate().map_err(usage)?;
        if let Some(f) = cfg.calibration_holdout {
            if !(f > 0.0 && f < 1.0) {
                return Err(usage(format!(
                    "--calibration-holdout must lie in (0, 1), got {f}"
                )));
            }
        }
        Ok(cfg)
    }
}

fn cmd_fit(args: FitArgs) -> CliResult<()> {
    let cfg = FitConfig::from_args(&args)?;
    let ds = load_csv(&args.data, &cfg.target, cfg.has_header)?;
    let (model, history) = match (cfg.model, cfg.loss) {
        (ModelKind::NnMse, _) | (_, None) => cfg.model.fit_traced(&ds, &cfg.train)?,
        (_, Some(loss)) => {
            let holdout = cfg
                .calibration_holdout
                .map(|f| SplitSpec::new(f, cfg.train.seed));
            let (m, h) = cairo_fit_traced(&ds, loss, &cfg.train, holdout.as_ref())?;
            (FittedModel::Cairo(m), h)
        }
    };
    if let Some(dir) = &args.emit_plot_data {
        emit_plot_data(dir, &model, &ds, &history)?;
    }
    ModelBundle::new(model, to_json(&cfg)?).save(&args.out)?;
    Ok(())
}

fn emit_plot_data(
    dir: &Path,
    model: &FittedModel,
    ds: &cairo_core::data::Dataset,
    history: &[f64],
) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let scores = model.scores(ds.features())?;
    let preds = model.predict(ds.features())?;
    let y = ds.targets();
    write_columns_csv(
        dir.join("score_target.csv"),
        &["score", "target"],
        &[&scores, y],
    )?;
    write_columns_csv(
        dir.join("score_calibrated.csv"),
        &["score", "calibrated"],
        &[&scores, &preds],
    )?;
    write_columns_csv(
        dir.join("prediction_target.csv"),
        &["prediction", "target"],
        &[&preds, y],
    )?;
    write_column_csv(dir.join("loss_history.csv"), "loss", history)?;
    Ok(())
}

#[derive(Args)]
struct PredictArgs {
    /// Model JSON written by `fit`.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Target column to drop from the input if present.
    #[arg(long, default_value = TARGET_COLUMN)]
    target: String,
    #[arg(long)]
    no_header: bool,
    #[arg(long)]
    out: PathBuf,
}

fn cmd_predict(args: PredictArgs) -> CliResult<()> {
    let bundle = ModelBundle::load(&args.model)?;
    let x = load_features_csv(&args.data, &args.target, !args.no_header)?;
    if x.cols() != bundle.model.input_dim() {
        return Err(Failure::Runtime(anyhow!(
            "model expects {} feature columns, {} has {}",
            bundle.model.input_dim(),
            args.data.display(),
            x.cols()
        )));
    }
    let preds = bundle.model.predict(&x)?;
    write_column_csv(&args.out, PREDICTION_COLUMN, &preds)?;
    Ok(())
}

#[derive(Args)]
struct EvalArgs {
    /// CSV with a `prediction` column, as written by `predict`.
    #[arg(long)]
    predictions: PathBuf,
    /// CSV holding the observed targets.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = TARGET_COLUMN)]
    target: String,
    #[arg(long)]
    no_header: bool,
    /// Model name recorded in the report.
    #[arg(long, default_value = "model")]
    name: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct EvalConfig<'a> {
    predictions: &'a Path,
    data: &'a Path,
    target: &'a str,
    has_header: bool,
    name: &'a str,
}

fn cmd_eval(args: EvalArgs) -> CliResult<()> {
    let preds = load_column_csv(&args.predictions, PREDICTION_COLUMN)?;
    let ds = load_csv(&args.data, &args.target, !args.no_header)?;
    if preds.len() != ds.len() {
        return Err(Failure::Runtime(anyhow!(
            "{} predictions for {} rows",
            preds.len(),
            ds.len()
        )));
    }
    let report = EvalReport::evaluate(&args.name, ds.targets(), &preds, ds.true_mean())?;
    let config = EvalConfig {
        predictions: &args.predictions,
        data: &args.data,
        target: &args.target,
        has_header: !args.no_header,
        name: &args.name,
    };
    let out = serde_json::json!({
        "version": EVAL_VERSION,
        "config": to_json(&config)?,
        "report": to_json(&report)?,
    });
    write_json(&args.out, &out)?;
    Ok(())
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated scenarios.
    #[arg(long, value_delimiter = ',', value_parser = parse_scenario)]
    scenarios: Option<Vec<Scenario>>,
    /// Comma-separated models.
    #[arg(long, value_delimiter = ',', value_parser = parse_model)]
    models: Option<Vec<ModelKind>>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    reps: Option<usize>,
    /// Base seed; repetition r draws its data from seed + r.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    train_fraction: Option<f64>,
    #[command(flatten)]
    train: TrainFlags,
    #[arg(long)]
    lognormal_sigma: Option<f64>,
    #[arg(long)]
    centered_lognormal: bool,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for results.json and table1.csv.
    #[arg(long)]
    out: PathBuf,
}

fn cmd_bench(args: BenchArgs) -> CliResult<()> {
    let mut cfg: BenchConfig = read_config(args.config.as_deref())?;
    if let Some(v) = args.scenarios {
        cfg.scenarios = v;
    }
    if let Some(v) = args.models {
        cfg.models = v;
    }
    if let Some(v) = args.n {
        cfg.n = v;
    }
    if let Some(v) = args.d {
        cfg.d = v;
    }
    if let Some(v) = args.reps {
        cfg.repetitions = v;
    }
    if let Some(v) = args.seed {
        cfg.base_seed = v;
    }
    if let Some(v) = args.train_fraction {
        cfg.train_fraction = v;
    }
    if let Some(v) = args.lognormal_sigma {
        cfg.heavy_tail.sigma = v;
    }
    if args.centered_lognormal {
        cfg.heavy_tail.centered = true;
    }
    args.train.apply(&mut cfg.train);
    for tc in cfg.overrides.values_mut() {
        args.train.apply(tc);
    }
    cfg.validate().map_err(usage)?;

    let report = run_bench(&cfg)?;
    fs::create_dir_all(&args.out)
        .with_context(|| format!("cannot create {}", args.out.display()))?;
    report.write_json(args.out.join("results.json"))?;
    report.write_table_csv(args.out.join("table1.csv"))?;
    print!("{}", report.table_csv());
    Ok(())
}

fn configure_threads() -> anyhow::Result<()> {
    let Ok(raw) = std::env::var("CAIRO_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| anyhow!("CAIRO_THREADS must be a positive integer, got {raw:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads()
        .map_err(Failure::Usage)
        .and_then(|()| match cli.command {
            Command::Simulate(a) => cmd_simulate(a),
            Command::Fit(a) => cmd_fit(a),
            Command::Predict(a) => cmd_predict(a),
            Command::Eval(a) => cmd_eval(a),
            Command::Bench(a) => cmd_bench(a),
        });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
