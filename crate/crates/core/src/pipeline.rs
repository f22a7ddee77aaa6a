//! Two-stage fit and predict, plus the pointwise MSE baseline with the same
//! network and training loop.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, SplitSpec, Standardizer};
use crate::error::{CairoError, Result};
use crate::isotonic::{audit_autocalibration, pav_fit, AutoCalibrationReport, CalibrationMap};
use crate::losses::LossSpec;
use crate::matrix::Matrix;
use crate::scorer::{train_rows, MlpParams, TrainConfig};

pub const MODEL_VERSION: &str = "cairo-model-v1";

/// Ranking scorer followed by an isotonic map on its scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CairoModel {
    pub scorer: MlpParams,
    pub calibration: CalibrationMap,
    pub standardizer: Standardizer,
    pub spec: LossSpec,
}

impl CairoModel {
    pub fn scores(&self, x: &Matrix) -> Result<Vec<f64>> {
        self.scorer.scores(&self.standardizer.transform(x)?)
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        Ok(self.calibration.predict(&self.scores(x)?))
    }

    /// Level-set calibration check of the model on `ds`. On the rows the
    /// map was fitted on this is zero up to rounding.
    pub fn audit(&self, ds: &Dataset) -> Result<AutoCalibrationReport> {
        audit_autocalibration(
            &self.calibration,
            &self.scores(ds.features())?,
            ds.targets(),
        )
    }
}

pub fn cairo_fit(train: &Dataset, loss: LossSpec, cfg: &TrainConfig) -> Result<CairoModel> {
    cairo_fit_traced(train, loss, cfg, None).map(|(model, _)| model)
}

/// [`cairo_fit`] that also returns the per-epoch training loss. With
/// `holdout`, the scorer is trained on the split's train part and the
/// isotonic map is fitted on the held-out part instead of the same rows.
pub fn cairo_fit_traced(
    train: &Dataset,
    loss: LossSpec,
    cfg: &TrainConfig,
    holdout: Option<&SplitSpec>,
) -> Result<(CairoModel, Vec<f64>)> {
    if !loss.is_ranking() {
        return Err(CairoError::InvalidParameter(
            "the two-stage fit needs a ranking objective".into(),
        ));
    }
    let cfg = cfg.with_loss(loss);
    let standardizer = Standardizer::fit(train.features());
    let x = standardizer.transform(train.features())?;
    let (scorer, history, calibration) = match holdout {
        None => {
            let (scorer, history) = train_rows(&x, train.targets(), &cfg)?;
            let scores = scorer.scores(&x)?;
            let calibration = pav_fit(&scores, train.targets())?;
            (scorer, history, calibration)
        }
        Some(split) => {
            let (fit_idx, cal_idx) = split.indices(train.len())?;
            let fit_y: Vec<f64> = fit_idx.iter().map(|&i| train.targets()[i]).collect();
            let cal_y: Vec<f64> = cal_idx.iter().map(|&i| train.targets()[i]).collect();
            let (scorer, history) = train_rows(&x.select_rows(&fit_idx), &fit_y, &cfg)?;
            let scores = scorer.scores(&x.select_rows(&cal_idx))?;
            let calibration = pav_fit(&scores, &cal_y)?;
            (scorer, history, calibration)
        }
    };
    let model = CairoModel {
        scorer,
        calibration,
        standardizer,
        spec: loss,
    };
    Ok((model, history))
}

pub fn cairo_predict(model: &CairoModel, x: &Matrix) -> Result<Vec<f64>> {
    model.predict(x)
}

/// Same network trained on squared error against standardized targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MseModel {
    pub scorer: MlpParams,
    pub standardizer: Standardizer,
    pub target_mean: f64,
    pub target_stddev: f64,
}

impl MseModel {
    pub fn scores(&self, x: &Matrix) -> Result<Vec<f64>> {
        self.scorer.scores(&self.standardizer.transform(x)?)
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        Ok(self
            .scores(x)?
            .into_iter()
            .map(|s| s * self.target_stddev + self.target_mean)
            .collect())
    }
}

pub fn mse_fit(train: &Dataset, cfg: &TrainConfig) -> Result<MseModel> {
    mse_fit_traced(train, cfg).map(|(model, _)| model)
}

pub fn mse_fit_traced(train: &Dataset, cfg: &TrainConfig) -> Result<(MseModel, Vec<f64>)> {
    let cfg = cfg.with_loss(LossSpec::PointwiseMse);
    let standardizer = Standardizer::fit(train.features());
    let x = standardizer.transform(train.features())?;
    let y = train.targets();
    let n = y.len() as f64;
    let target_mean = y.iter().sum::<f64>() / n;
    let sd = (y.iter().map(|v| (v - target_mean).powi(2)).sum::<f64>() / n).sqrt();
    let target_stddev = if sd > 0.0 && sd.is_finite() { sd } else { 1.0 };
    let z: Vec<f64> = y
        .iter()
        .map(|v| (v - target_mean) / target_stddev)
        .collect();
    let (scorer, history) = train_rows(&x, &z, &cfg)?;
    let model = MseModel {
        scorer,
        standardizer,
        target_mean,
        target_stddev,
    };
    Ok((model, history))
}

pub fn mse_predict(model: &MseModel, x: &Matrix) -> Result<Vec<f64>> {
    model.predict(x)
}

/// The four compared regressors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    #[serde(rename = "ranknet")]
    CairoRankNet,
    #[serde(rename = "ranknet-giniw")]
    CairoRankNetGiniW,
    #[serde(rename = "gininet-softrank")]
    CairoGiniNetSoftRank,
    NnMse,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        Self::CairoRankNet,
        Self::CairoRankNetGiniW,
        Self::CairoGiniNetSoftRank,
        Self::NnMse,
    ];

    pub fn cli_name(self) -> &'static str {
        match self {
            Self::CairoRankNet => "ranknet",
            Self::CairoRankNetGiniW => "ranknet-giniw",
            Self::CairoGiniNetSoftRank => "gininet-softrank",
            Self::NnMse => "nn-mse",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Self::CairoRankNet => "CAIRO-RankNet",
            Self::CairoRankNetGiniW => "CAIRO-RankNet-GiniW",
            Self::CairoGiniNetSoftRank => "CAIRO-GiniNet-SoftRank",
            Self::NnMse => "NN-MSE",
        }
    }

    pub fn loss(self) -> LossSpec {
        match self {
            Self::CairoRankNet => LossSpec::ranknet(),
            Self::CairoRankNetGiniW => LossSpec::ranknet_giniw(),
            Self::CairoGiniNetSoftRank => LossSpec::gininet_softrank(),
            Self::NnMse => LossSpec::PointwiseMse,
        }
    }

    pub fn fit(self, train: &Dataset, cfg: &TrainConfig) -> Result<FittedModel> {
        self.fit_traced(train, cfg).map(|(model, _)| model)
    }

    pub fn fit_traced(self, train: &Dataset, cfg: &TrainConfig) -> Result<(FittedModel, Vec<f64>)> {
        match self {
            Self::NnMse => mse_fit_traced(train, cfg).map(|(m, h)| (FittedModel::NnMse(m), h)),
            kind => cairo_fit_traced(train, kind.loss(), cfg, None)
                .map(|(m, h)| (FittedModel::Cairo(m), h)),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

impl FromStr for ModelKind {
    type Err = CairoError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.cli_name() == s)
            .ok_or_else(|| CairoError::InvalidParameter(format!("unknown model `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FittedModel {
    Cairo(CairoModel),
    NnMse(MseModel),
}

impl FittedModel {
    pub fn input_dim(&self) -> usize {
        match self {
            Self::Cairo(m) => m.standardizer.dim(),
            Self::NnMse(m) => m.standardizer.dim(),
        }
    }

    pub fn scores(&self, x: &Matrix) -> Result<Vec<f64>> {
        match self {
            Self::Cairo(m) => m.scores(x),
            Self::NnMse(m) => m.scores(x),
        }
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        match self {
            Self::Cairo(m) => m.predict(x),
            Self::NnMse(m) => m.predict(x),
        }
    }
}

/// On-disk form of a fitted model with the configuration that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBundle {
    pub version: String,
    #[serde(default)]
    pub config: serde_json::Value,
    pub model: FittedModel,
}

impl ModelBundle {
    pub fn new(model: FittedModel, config: serde_json::Value) -> Self {
        Self {
            version: MODEL_VERSION.to_owned(),
            config,
            model,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let bundle: Self = serde_json::from_str(text)?;
        if bundle.version != MODEL_VERSION {
            return Err(CairoError::InvalidParameter(format!(
                "unsupported model version {:?}",
                bundle.version
            )));
        }
        Ok(bundle)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|source| CairoError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| CairoError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }
}
