//! Stage-2 calibration: least-squares isotonic regression of targets on
//! scores via Pool Adjacent Violators, and the interpolating, clipping
//! prediction map built from the fit.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ensure_same_len, CairoError, Result};

pub const CALIBRATION_VERSION: &str = "cairo-iso-v1";

/// Monotone map from scores to the target scale.
///
/// `knots` are the unique training scores in increasing order and `fitted`
/// the isotonic fit at each knot. Between knots the map interpolates
/// linearly; outside `[knots[0], knots[last]]` it is constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CalibrationRepr", into = "CalibrationRepr")]
pub struct CalibrationMap {
    knots: Vec<f64>,
    fitted: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CalibrationRepr {
    version: String,
    knots: Vec<f64>,
    fitted: Vec<f64>,
}

impl From<CalibrationMap> for CalibrationRepr {
    fn from(map: CalibrationMap) -> Self {
        Self {
            version: CALIBRATION_VERSION.to_owned(),
            knots: map.knots,
            fitted: map.fitted,
        }
    }
}

impl TryFrom<CalibrationRepr> for CalibrationMap {
    type Error = String;

    fn try_from(repr: CalibrationRepr) -> std::result::Result<Self, String> {
        if repr.version != CALIBRATION_VERSION {
            return Err(format!(
                "unsupported calibration version {:?}",
                repr.version
            ));
        }
        CalibrationMap::from_parts(repr.knots, repr.fitted).map_err(|e| e.to_string())
    }
}

impl CalibrationMap {
    /// Checks that knots strictly increase and fitted values do not decrease.
    pub fn from_parts(knots: Vec<f64>, fitted: Vec<f64>) -> Result<Self> {
        ensure_same_len(knots.len(), fitted.len())?;
        if knots.is_empty() {
            return Err(CairoError::EmptyMap);
        }
        ensure_finite(&knots, "calibration knots")?;
        ensure_finite(&fitted, "calibration values")?;
        if knots.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CairoError::InvalidParameter(
                "calibration knots must strictly increase".into(),
            ));
        }
        if fitted.windows(2).any(|w| w[0] > w[1]) {
            return Err(CairoError::InvalidParameter(
                "calibration values must be nondecreasing".into(),
            ));
        }
        Ok(Self { knots, fitted })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn fitted(&self) -> &[f64] {
        &self.fitted
    }

    pub fn score_range(&self) -> (f64, f64) {
        (self.knots[0], self.knots[self.knots.len() - 1])
    }

    pub fn predict_one(&self, score: f64) -> f64 {
        let last = self.knots.len() - 1;
        if score <= self.knots[0] {
            return self.fitted[0];
        }
        if score >= self.knots[last] {
            return self.fitted[last];
        }
        // knots[k] <= score < knots[k + 1]
        let k = self.knots.partition_point(|&t| t <= score) - 1;
        let (a, b) = (self.knots[k], self.knots[k + 1]);
        let (fa, fb) = (self.fitted[k], self.fitted[k + 1]);
        if score == a {
            return fa;
        }
        let t = (score - a) / (b - a);
        (fa + t * (fb - fa)).clamp(fa, fb)
    }

    pub fn predict(&self, scores: &[f64]) -> Vec<f64> {
        scores.iter().map(|&s| self.predict_one(s)).collect()
    }
}

struct Block {
    sum: f64,
    weight: f64,
    len: usize,
}

impl Block {
    fn mean(&self) -> f64 {
        self.sum / self.weight
    }
}

/// Sorted unique scores with the mean target and count at each.
fn pool_ties(scores: &[f64], targets: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut knots: Vec<f64> = Vec::new();
    let mut sums: Vec<f64> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    for &i in &order {
        match knots.last() {
            Some(&k) if k == scores[i] => {
                *sums.last_mut().unwrap() += targets[i];
                *weights.last_mut().unwrap() += 1.0;
            }
            _ => {
                knots.push(scores[i]);
                sums.push(targets[i]);
                weights.push(1.0);
            }
        }
    }
    let means = sums.iter().zip(&weights).map(|(s, w)| s / w).collect();
    (knots, means, weights)
}

/// Weighted PAV over points already in score order.
fn pav_weighted(values: &[f64], weights: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<Block> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        blocks.push(Block {
            sum: v * w,
            weight: w,
            len: 1,
        });
        while blocks.len() >= 2
            && blocks[blocks.len() - 2].mean() >= blocks[blocks.len() - 1].mean()
        {
            let top = blocks.pop().unwrap();
            let prev = blocks.last_mut().unwrap();
            prev.sum += top.sum;
            prev.weight += top.weight;
            prev.len += top.len;
        }
    }
    let mut out = Vec::with_capacity(values.len());
    for b in &blocks {
        let m = b.mean();
        out.extend(std::iter::repeat_n(m, b.len));
    }
    out
}

/// Least-squares nondecreasing fit of `targets` in `scores` order.
///
/// Equal scores are pooled first, so they always share a fitted value.
/// O(n log n) for the sort, linear afterwards.
pub fn pav_fit(scores: &[f64], targets: &[f64]) -> Result<CalibrationMap> {
    ensure_same_len(scores.len(), targets.len())?;
    if scores.is_empty() {
        return Err(CairoError::EmptyMap);
    }
    ensure_finite(scores, "scores")?;
    ensure_finite(targets, "targets")?;
    let (knots, means, weights) = pool_ties(scores, targets);
    let fitted = pav_weighted(&means, &weights);
    Ok(CalibrationMap { knots, fitted })
}

pub fn predict(map: &CalibrationMap, scores: &[f64]) -> Vec<f64> {
    map.predict(scores)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AutoCalibrationReport {
    pub block_count: usize,
    pub max_abs_block_residual: f64,
}

/// Groups the training points by predicted value and reports the largest
/// gap between a group's mean target and its prediction.
pub fn audit_autocalibration(
    map: &CalibrationMap,
    scores: &[f64],
    targets: &[f64],
) -> Result<AutoCalibrationReport> {
    ensure_same_len(scores.len(), targets.len())?;
    let preds = map.predict(scores);
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[a].total_cmp(&preds[b]));
    let mut block_count = 0;
    let mut worst: f64 = 0.0;
    let mut start = 0;
    while start < order.len() {
        let value = preds[order[start]];
        let mut end = start;
        let mut sum = 0.0;
        while end < order.len() && preds[order[end]] == value {
            sum += targets[order[end]];
            end += 1;
        }
        let mean = sum / (end - start) as f64;
        worst = worst.max((mean - value).abs());
        block_count += 1;
        start = end;
    }
    Ok(AutoCalibrationReport {
        block_count,
        max_abs_block_residual: worst,
    })
}

/// Exhaustive isotonic fit for tiny inputs: every contiguous partition of
/// the (tie-pooled) points in score order is tried, infeasible ones with
/// decreasing block means are dropped, and the least-squares one wins.
/// Returns the fitted value of each input point, in input order.
pub fn pav_oracle(scores: &[f64], targets: &[f64]) -> Result<Vec<f64>> {
    ensure_same_len(scores.len(), targets.len())?;
    let n = scores.len();
    if n > 10 {
        return Err(CairoError::OracleTooLarge(n));
    }
    if n == 0 {
        return Err(CairoError::EmptyMap);
    }
    let (knots, means, weights) = pool_ties(scores, targets);
    let m = knots.len();
    let knot_of: Vec<usize> = scores
        .iter()
        .map(|s| knots.iter().position(|k| k == s).unwrap())
        .collect();

    let mut best: Option<(f64, Vec<f64>)> = None;
    for cuts in 0u32..(1u32 << (m - 1)) {
        // bit b set = block boundary between knot b and knot b + 1
        let mut fit = vec![0.0; m];
        let mut start = 0;
        let mut prev_mean = f64::NEG_INFINITY;
        let mut feasible = true;
        for end in 1..=m {
            if end == m || cuts & (1 << (end - 1)) != 0 {
                let w: f64 = weights[start..end].iter().sum();
                let s: f64 = (start..end).map(|k| means[k] * weights[k]).sum();
                let mean = s / w;
                if mean < prev_mean {
                    feasible = false;
                    break;
                }
                fit[start..end].iter_mut().for_each(|f| *f = mean);
                prev_mean = mean;
                start = end;
            }
        }
        if !feasible {
            continue;
        }
        let sse: f64 = targets
            .iter()
            .zip(&knot_of)
            .map(|(y, &k)| (y - fit[k]).powi(2))
            .sum();
        if best.as_ref().is_none_or(|(b, _)| sse < *b) {
            best = Some((sse, fit));
        }
    }
    let (_, fit) = best.expect("the single-block partition is always feasible");
    Ok(knot_of.iter().map(|&k| fit[k]).collect())
}
