//! RMSE, Spearman's rho, Kendall's tau-b and aggregation over repetitions.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ensure_same_len, CairoError, Result};
use crate::ranks::mid_ranks_unchecked;

pub fn rmse(y: &[f64], yhat: &[f64]) -> Result<f64> {
    ensure_same_len(y.len(), yhat.len())?;
    if y.is_empty() {
        return Err(CairoError::TooFewRows(0));
    }
    let sse: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((sse / y.len() as f64).sqrt())
}

fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(CairoError::UndefinedCorrelation("constant input"));
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

fn check_pair(a: &[f64], b: &[f64]) -> Result<()> {
    ensure_same_len(a.len(), b.len())?;
    if a.len() < 2 {
        return Err(CairoError::TooFewRows(a.len()));
    }
    ensure_finite(a, "first argument")?;
    ensure_finite(b, "second argument")
}

/// Pearson correlation of mid-ranks.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b)?;
    pearson(&mid_ranks_unchecked(a), &mid_ranks_unchecked(b))
}

/// Pair counts behind tau-b. All counts are over unordered pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct TauCounts {
    pairs: u64,
    /// concordant minus discordant
    score: i64,
    tied_a: u64,
    tied_b: u64,
}

impl TauCounts {
    fn tau_b(self) -> Result<f64> {
        let da = self.pairs - self.tied_a;
        let db = self.pairs - self.tied_b;
        if da == 0 || db == 0 {
            return Err(CairoError::UndefinedCorrelation("all values tied"));
        }
        Ok(self.score as f64 / (da as f64 * db as f64).sqrt())
    }
}

fn tied_pairs(group: u64) -> u64 {
    group * group.saturating_sub(1) / 2
}

/// Sum of tied pairs over runs of equal values in an already sorted key.
fn count_ties<T: PartialEq>(keys: impl Iterator<Item = T>) -> u64 {
    let mut total = 0;
    let mut run = 0u64;
    let mut prev: Option<T> = None;
    for k in keys {
        if prev.as_ref() == Some(&k) {
            run += 1;
        } else {
            total += tied_pairs(run);
            run = 1;
        }
        prev = Some(k);
    }
    total + tied_pairs(run)
}

/// Stable merge sort of `v` counting exchanges (strict inversions).
fn sort_count_swaps(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = sort_count_swaps(&mut v[..mid], &mut buf[..mid]);
    swaps += sort_count_swaps(&mut v[mid..], &mut buf[mid..]);
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[i] <= v[j] {
            buf[k] = v[i];
            i += 1;
        } else {
            buf[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

/// Knight's O(n log n) pair counting.
fn tau_counts_fast(a: &[f64], b: &[f64]) -> TauCounts {
    let n = a.len() as u64;
    let mut order: Vec<usize> = (0..a.len()).collect();
    order.sort_by(|&i, &j| a[i].total_cmp(&a[j]).then(b[i].total_cmp(&b[j])));
    let tied_a = count_ties(order.iter().map(|&i| a[i]));
    let tied_ab = count_ties(order.iter().map(|&i| (a[i], b[i])));
    let mut bs: Vec<f64> = order.iter().map(|&i| b[i]).collect();
    let mut buf = vec![0.0; bs.len()];
    let swaps = sort_count_swaps(&mut bs, &mut buf);
    let tied_b = count_ties(bs.iter().copied());
    let pairs = tied_pairs(n);
    // concordant + discordant = pairs - tied_a - tied_b + tied_ab
    let untied = pairs as i64 - tied_a as i64 - tied_b as i64 + tied_ab as i64;
    TauCounts {
        pairs,
        score: untied - 2 * swaps as i64,
        tied_a,
        tied_b,
    }
}

/// Direct double loop over pairs.
fn tau_counts_reference(a: &[f64], b: &[f64]) -> TauCounts {
    let n = a.len();
    let mut score = 0i64;
    let (mut tied_a, mut tied_b) = (0u64, 0u64);
    for i in 0..n {
        for j in (i + 1)..n {
            let da = a[i] - a[j];
            let db = b[i] - b[j];
            if da == 0.0 {
                tied_a += 1;
            }
            if db == 0.0 {
                tied_b += 1;
            }
            let prod = da.signum() * db.signum();
            if da != 0.0 && db != 0.0 {
                score += if prod > 0.0 { 1 } else { -1 };
            }
        }
    }
    TauCounts {
        pairs: tied_pairs(n as u64),
        score,
        tied_a,
        tied_b,
    }
}

/// Kendall's tau-b, `(C - D) / sqrt((P - T_a)(P - T_b))`; tau-a when there
/// are no ties.
pub fn kendall(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b)?;
    tau_counts_fast(a, b).tau_b()
}

/// O(n^2) tau-b. Produces the same pair counts as [`kendall`], hence the
/// same value bit for bit.
pub fn kendall_reference(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b)?;
    tau_counts_reference(a, b).tau_b()
}

/// Test-set scores of one model in one repetition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model_name: String,
    pub spearman: f64,
    pub kendall: f64,
    pub rmse: f64,
    /// RMSE against the known conditional mean, for simulated data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rmse_true_mean: Option<f64>,
}

impl EvalReport {
    /// Correlations between `predictions` and `targets`, RMSE of the
    /// predictions against `targets` (and against `true_mean` when given).
    pub fn evaluate(
        model_name: &str,
        targets: &[f64],
        predictions: &[f64],
        true_mean: Option<&[f64]>,
    ) -> Result<Self> {
        Ok(Self {
            model_name: model_name.to_owned(),
            spearman: spearman(predictions, targets)?,
            kendall: kendall(predictions, targets)?,
            rmse: rmse(targets, predictions)?,
            rmse_true_mean: true_mean.map(|m| rmse(m, predictions)).transpose()?,
        })
    }
}

/// Mean and normal-approximation 95% half-width `1.96 sd / sqrt(R)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub half_width: f64,
}

impl MetricSummary {
    pub fn from_values(values: &[f64]) -> Self {
        let r = values.len() as f64;
        let mean = values.iter().sum::<f64>() / r;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1.0)
        } else {
            0.0
        };
        Self {
            mean,
            half_width: 1.96 * var.sqrt() / r.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub model_name: String,
    pub repetitions: usize,
    pub spearman: MetricSummary,
    pub kendall: MetricSummary,
    pub rmse: MetricSummary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rmse_true_mean: Option<MetricSummary>,
}

/// One aggregate per model name, in order of first appearance.
pub fn aggregate(reports: &[EvalReport]) -> Result<Vec<AggregateReport>> {
    let mut names: Vec<&str> = Vec::new();
    for r in reports {
        if !names.contains(&r.model_name.as_str()) {
            names.push(&r.model_name);
        }
    }
    names
        .into_iter()
        .map(|name| {
            let group: Vec<&EvalReport> = reports.iter().filter(|r| r.model_name == name).collect();
            if group.len() < 2 {
                return Err(CairoError::TooFewRepetitions {
                    model: name.to_owned(),
                    found: group.len(),
                });
            }
            let pick = |f: fn(&EvalReport) -> f64| {
                MetricSummary::from_values(&group.iter().map(|r| f(r)).collect::<Vec<_>>())
            };
            let true_mean: Option<Vec<f64>> = group.iter().map(|r| r.rmse_true_mean).collect();
            Ok(AggregateReport {
                model_name: name.to_owned(),
                repetitions: group.len(),
                spearman: pick(|r| r.spearman),
                kendall: pick(|r| r.kendall),
                rmse: pick(|r| r.rmse),
                rmse_true_mean: true_mean.map(|v| MetricSummary::from_values(&v)),
            })
        })
        .collect()
}
