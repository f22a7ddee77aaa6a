//! Synthetic benchmark: every configured model on every configured scenario,
//! repeated over freshly drawn datasets, with per-model aggregation.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{format_f64, split, SplitSpec};
use crate::dgp::{generate, HeavyTailNoise, Scenario, ScenarioSpec};
use crate::error::{CairoError, Result};
use crate::metrics::{aggregate, AggregateReport, EvalReport, MetricSummary};
use crate::pipeline::ModelKind;
use crate::rng::SeededRng;
use crate::scorer::TrainConfig;

pub const BENCH_VERSION: &str = "cairo-bench-v1";

const SPLIT_STREAM: u64 = 1;
const TRAIN_STREAM: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub scenarios: Vec<Scenario>,
    pub models: Vec<ModelKind>,
    pub n: usize,
    pub d: usize,
    pub repetitions: usize,
    pub base_seed: u64,
    pub train_fraction: f64,
    pub heavy_tail: HeavyTailNoise,
    /// Shared training settings; the objective is always taken from the model.
    pub train: TrainConfig,
    pub overrides: BTreeMap<ModelKind, TrainConfig>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            scenarios: Scenario::ALL.to_vec(),
            models: ModelKind::ALL.to_vec(),
            n: 6000,
            d: 10,
            repetitions: 5,
            base_seed: 0,
            train_fraction: 0.7,
            heavy_tail: HeavyTailNoise::default(),
            train: TrainConfig::default(),
            overrides: BTreeMap::new(),
        }
    }
}

impl BenchConfig {
    pub fn train_config(&self, model: ModelKind) -> TrainConfig {
        self.overrides.get(&model).copied().unwrap_or(self.train)
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(CairoError::InvalidParameter(
                "repetitions must be >= 1".into(),
            ));
        }
        if self.scenarios.is_empty() || self.models.is_empty() {
            return Err(CairoError::InvalidParameter(
                "at least one scenario and one model are required".into(),
            ));
        }
        let mut spec = ScenarioSpec::new(self.scenarios[0], self.n, self.d, self.base_seed);
        spec.heavy_tail = self.heavy_tail;
        spec.validate()?;
        SplitSpec::new(self.train_fraction, 0).sizes(self.n)?;
        for &model in &self.models {
            self.train_config(model)
                .with_loss(model.loss())
                .validate()?;
        }
        Ok(())
    }
}

/// Test-set report of one model on one repetition of one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub scenario: Scenario,
    pub model: ModelKind,
    pub repetition: usize,
    pub data_seed: u64,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioAggregate {
    pub scenario: Scenario,
    pub models: Vec<AggregateReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub version: String,
    pub config: BenchConfig,
    pub runs: Vec<RunRecord>,
    /// Empty when the run has a single repetition.
    pub aggregates: Vec<ScenarioAggregate>,
    pub notes: Vec<String>,
}

fn derived_seed(root: u64, stream: u64) -> u64 {
    SeededRng::new(root).fork(stream).next_u64()
}

fn run_unit(cfg: &BenchConfig, scenario: Scenario, rep: usize) -> Result<Vec<RunRecord>> {
    let data_seed = cfg.base_seed.wrapping_add(rep as u64);
    let wrap = |model: &str, source: CairoError| CairoError::Repetition {
        scenario: scenario.cli_name().to_owned(),
        model: model.to_owned(),
        rep,
        source: Box::new(source),
    };
    let mut spec = ScenarioSpec::new(scenario, cfg.n, cfg.d, data_seed);
    spec.heavy_tail = cfg.heavy_tail;
    let ds = generate(&spec).map_err(|e| wrap("*", e))?;
    let split_spec = SplitSpec::new(cfg.train_fraction, derived_seed(data_seed, SPLIT_STREAM));
    let (train, test) = split(&ds, &split_spec).map_err(|e| wrap("*", e))?;
    let train_seed = derived_seed(data_seed, TRAIN_STREAM);

    cfg.models
        .iter()
        .map(|&model| {
            let mut tc = cfg.train_config(model);
            tc.seed ^= train_seed;
            let report = model
                .fit(&train, &tc)
                .and_then(|fitted| fitted.predict(test.features()))
                .and_then(|preds| {
                    EvalReport::evaluate(
                        model.display_name(),
                        test.targets(),
                        &preds,
                        test.true_mean(),
                    )
                })
                .map_err(|e| wrap(model.display_name(), e))?;
            Ok(RunRecord {
                scenario,
                model,
                repetition: rep,
                data_seed,
                report,
            })
        })
        .collect()
}

/// Runs every (scenario, repetition) unit, in parallel on the current rayon
/// pool. Units own their data and seeds, so the report does not depend on
/// the thread count.
pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport> {
    cfg.validate()?;
    let units: Vec<(Scenario, usize)> = cfg
        .scenarios
        .iter()
        .flat_map(|&s| (0..cfg.repetitions).map(move |r| (s, r)))
        .collect();
    let results: Vec<Result<Vec<RunRecord>>> = units
        .par_iter()
        .map(|&(scenario, rep)| run_unit(cfg, scenario, rep))
        .collect();
    let mut runs = Vec::with_capacity(units.len() * cfg.models.len());
    for r in results {
        runs.extend(r?);
    }
    finish(cfg, runs)
}

/// Single-threaded equivalent of [`run_bench`].
pub fn run_bench_serial(cfg: &BenchConfig) -> Result<BenchReport> {
    cfg.validate()?;
    let mut runs = Vec::new();
    for &scenario in &cfg.scenarios {
        for rep in 0..cfg.repetitions {
            runs.extend(run_unit(cfg, scenario, rep)?);
        }
    }
    finish(cfg, runs)
}

fn finish(cfg: &BenchConfig, runs: Vec<RunRecord>) -> Result<BenchReport> {
    let mut aggregates = Vec::new();
    let mut notes = vec!["tree-ensemble baselines are not part of this harness".to_owned()];
    if cfg.repetitions >= 2 {
        for &scenario in &cfg.scenarios {
            let reports: Vec<EvalReport> = runs
                .iter()
                .filter(|r| r.scenario == scenario)
                .map(|r| r.report.clone())
                .collect();
            aggregates.push(ScenarioAggregate {
                scenario,
                models: aggregate(&reports)?,
            });
        }
    } else {
        notes.push("single repetition: no aggregates or intervals".to_owned());
    }
    Ok(BenchReport {
        version: BENCH_VERSION.to_owned(),
        config: cfg.clone(),
        runs,
        aggregates,
        notes,
    })
}

impl BenchReport {
    pub fn aggregate_for(&self, scenario: Scenario, model: ModelKind) -> Option<&AggregateReport> {
        self.aggregates
            .iter()
            .find(|a| a.scenario == scenario)?
            .models
            .iter()
            .find(|m| m.model_name == model.display_name())
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text).map_err(|source| CairoError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    /// One row per (scenario, model) with mean and half-width columns.
    /// Single-repetition runs leave the half-width columns empty.
    pub fn table_csv(&self) -> String {
        let mut out = String::from(
            "scenario,model,repetitions,spearman,spearman_hw,kendall,kendall_hw,rmse,rmse_hw,rmse_true_mean,rmse_true_mean_hw\n",
        );
        let cell = |m: Option<MetricSummary>, with_hw: bool| match m {
            Some(m) if with_hw => format!("{},{}", format_f64(m.mean), format_f64(m.half_width)),
            Some(m) => format!("{},", format_f64(m.mean)),
            None => ",".to_owned(),
        };
        for &scenario in &self.config.scenarios {
            for &model in &self.config.models {
                let (reps, rho, tau, err, err_true) = match self.aggregate_for(scenario, model) {
                    Some(a) => (
                        a.repetitions,
                        Some(a.spearman),
                        Some(a.kendall),
                        Some(a.rmse),
                        a.rmse_true_mean,
                    ),
                    None => {
                        let Some(run) = self
                            .runs
                            .iter()
                            .find(|r| r.scenario == scenario && r.model == model)
                        else {
                            continue;
                        };
                        let one = |v: f64| {
                            Some(MetricSummary {
                                mean: v,
                                half_width: 0.0,
                            })
                        };
                        let r = &run.report;
                        (
                            1,
                            one(r.spearman),
                            one(r.kendall),
                            one(r.rmse),
                            r.rmse_true_mean.and_then(one),
                        )
                    }
                };
                let hw = reps >= 2;
                out.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    scenario.cli_name(),
                    model.display_name(),
                    reps,
                    cell(rho, hw),
                    cell(tau, hw),
                    cell(err, hw),
                    cell(err_true, hw),
                ));
            }
        }
        out
    }

    pub fn write_table_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io = |source| CairoError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut file = fs::File::create(path).map_err(io)?;
        file.write_all(self.table_csv().as_bytes()).map_err(io)
    }
}
