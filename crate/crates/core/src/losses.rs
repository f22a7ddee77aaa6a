//! Stage-1 objectives over a batch of targets `y` and scores `s`.
//!
//! All pairwise losses share the normalizer `1 / (n(n-1))`. The hard loss
//! sums the unordered-pair form and the ordered loss sums ordered pairs
//! `i != j`; on tie-free data the two coincide. Only
//! [`kendall_identity_check`] averages over the `n(n-1)/2` unordered pairs.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ensure_same_len, CairoError, Result};
use crate::ranks::{find_tie, mid_distribution, sigmoid, softrank, SoftRankConfig};

/// Pair weight `w_ij` of the weighted pairwise ranking loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightVariant {
    /// `w = 1`
    Uniform,
    /// `w = |y_i - y_j|`
    AbsoluteGap,
    /// `w = |F(y_i) - F(y_j)|` with `F` the mid-distribution of the targets.
    RankGap,
}

impl WeightVariant {
    pub const ALL: [WeightVariant; 3] = [Self::Uniform, Self::AbsoluteGap, Self::RankGap];
}

/// Which Stage-1 objective a scorer is trained on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "objective", rename_all = "kebab-case")]
pub enum LossSpec {
    PairwiseSurrogate { variant: WeightVariant, sigma: f64 },
    SoftGini { temperature: f64 },
    PointwiseMse,
}

impl LossSpec {
    pub const DEFAULT_SIGMA: f64 = 1.0;

    pub fn ranknet() -> Self {
        Self::PairwiseSurrogate {
            variant: WeightVariant::Uniform,
            sigma: Self::DEFAULT_SIGMA,
        }
    }

    pub fn ranknet_giniw() -> Self {
        Self::PairwiseSurrogate {
            variant: WeightVariant::AbsoluteGap,
            sigma: Self::DEFAULT_SIGMA,
        }
    }

    pub fn gininet_softrank() -> Self {
        Self::SoftGini {
            temperature: SoftRankConfig::DEFAULT_TEMPERATURE,
        }
    }

    pub fn is_ranking(&self) -> bool {
        !matches!(self, Self::PointwiseMse)
    }

    pub fn is_pairwise(&self) -> bool {
        matches!(self, Self::PairwiseSurrogate { .. })
    }

    pub fn uses_rank_gap(&self) -> bool {
        matches!(
            self,
            Self::PairwiseSurrogate {
                variant: WeightVariant::RankGap,
                ..
            }
        )
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::PairwiseSurrogate { sigma, .. } => check_sigma(sigma),
            Self::SoftGini { temperature } => SoftRankConfig::new(temperature).map(|_| ()),
            Self::PointwiseMse => Ok(()),
        }
    }

    /// Value and score gradient on one batch. `cdf` overrides the
    /// batch-local target mid-distribution used by rank-gap weights.
    pub fn evaluate(&self, y: &[f64], s: &[f64], cdf: Option<&[f64]>) -> Result<LossValueGrad> {
        match *self {
            Self::PairwiseSurrogate { variant, sigma } => {
                surrogate_pairwise_loss_with_cdf(y, s, variant, sigma, cdf)
            }
            Self::SoftGini { temperature } => soft_gini_loss(y, s, temperature),
            Self::PointwiseMse => mse_loss(y, s),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossValueGrad {
    pub value: f64,
    pub grad_scores: Vec<f64>,
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(CairoError::InvalidParameter(format!(
            "sigma must be positive, got {sigma}"
        )))
    }
}

fn check_pair_inputs(y: &[f64], s: &[f64]) -> Result<()> {
    ensure_same_len(y.len(), s.len())?;
    if y.len() < 2 {
        return Err(CairoError::TooFewRows(y.len()));
    }
    ensure_finite(y, "targets")?;
    ensure_finite(s, "scores")
}

/// Weight of the pair with targets `y_i`, `y_j` whose target
/// mid-distribution values are `cdf_i`, `cdf_j` (ignored unless rank-gap).
pub fn pair_weight(variant: WeightVariant, y_i: f64, y_j: f64, cdf_i: f64, cdf_j: f64) -> f64 {
    match variant {
        WeightVariant::Uniform => 1.0,
        WeightVariant::AbsoluteGap => (y_i - y_j).abs(),
        WeightVariant::RankGap => (cdf_i - cdf_j).abs(),
    }
}

/// Target mid-distribution for rank-gap weights, or `cdf` if given.
fn weight_cdf(variant: WeightVariant, y: &[f64], cdf: Option<&[f64]>) -> Result<Vec<f64>> {
    match (variant, cdf) {
        (WeightVariant::RankGap, Some(c)) => {
            ensure_same_len(y.len(), c.len())?;
            Ok(c.to_vec())
        }
        (WeightVariant::RankGap, None) => mid_distribution(y),
        _ => Ok(vec![0.0; y.len()]),
    }
}

/// `1/(n(n-1)) * sum_{i<j} w_ij 1{(y_i - y_j)(s_i - s_j) <= 0}`.
///
/// Pairs tied in both `y` and `s` count as misordered (weight permitting).
pub fn hard_pairwise_loss(y: &[f64], s: &[f64], variant: WeightVariant) -> Result<f64> {
    check_pair_inputs(y, s)?;
    let cdf = weight_cdf(variant, y, None)?;
    let n = y.len();
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            if (y[i] - y[j]) * (s[i] - s[j]) <= 0.0 {
                total += pair_weight(variant, y[i], y[j], cdf[i], cdf[j]);
            }
        }
    }
    Ok(total / (n * (n - 1)) as f64)
}

/// `1/(n(n-1)) * sum_{i != j} w_ij 1{y_i > y_j} 1{s_i < s_j}`. Requires
/// tie-free `y` and `s`.
pub fn hard_pairwise_loss_ordered(y: &[f64], s: &[f64], variant: WeightVariant) -> Result<f64> {
    check_pair_inputs(y, s)?;
    find_tie(y, "targets")?;
    find_tie(s, "scores")?;
    let cdf = weight_cdf(variant, y, None)?;
    let n = y.len();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j && y[i] > y[j] && s[i] < s[j] {
                total += pair_weight(variant, y[i], y[j], cdf[i], cdf[j]);
            }
        }
    }
    Ok(total / (n * (n - 1)) as f64)
}

/// `log(1 + e^x)` without overflow.
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Weighted log-sigmoid (RankNet) surrogate
/// `1/(n(n-1)) * sum_{i != j} w_ij 1{y_i > y_j} log(1 + exp(-sigma (s_i - s_j)))`
/// with its exact score gradient. Rank-gap weights use the batch targets.
pub fn surrogate_pairwise_loss(
    y: &[f64],
    s: &[f64],
    variant: WeightVariant,
    sigma: f64,
) -> Result<LossValueGrad> {
    surrogate_pairwise_loss_with_cdf(y, s, variant, sigma, None)
}

pub fn surrogate_pairwise_loss_with_cdf(
    y: &[f64],
    s: &[f64],
    variant: WeightVariant,
    sigma: f64,
    cdf: Option<&[f64]>,
) -> Result<LossValueGrad> {
    check_sigma(sigma)?;
    check_pair_inputs(y, s)?;
    let cdf = weight_cdf(variant, y, cdf)?;
    let n = y.len();
    let norm = 1.0 / (n * (n - 1)) as f64;
    let mut value = 0.0;
    let mut grad = vec![0.0; n];
    for i in 0..n {
        for j in (i + 1)..n {
            // orient the pair so that `hi` has the larger target
            let (hi, lo) = if y[i] > y[j] {
                (i, j)
            } else if y[j] > y[i] {
                (j, i)
            } else {
                continue;
            };
            let w = pair_weight(variant, y[hi], y[lo], cdf[hi], cdf[lo]);
            if w == 0.0 {
                continue;
            }
            let margin = sigma * (s[hi] - s[lo]);
            value += w * softplus(-margin);
            // d/d margin of softplus(-margin) = -sigmoid(-margin)
            let g = w * sigma * sigmoid(-margin) * norm;
            grad[hi] -= g;
            grad[lo] += g;
        }
    }
    Ok(LossValueGrad {
        value: value * norm,
        grad_scores: grad,
    })
}

/// Softrank Gini-covariance loss `-(2/n^2) * sum_i (y_i - mean(y)) softrank_i`.
pub fn soft_gini_loss(y: &[f64], s: &[f64], temperature: f64) -> Result<LossValueGrad> {
    let cfg = SoftRankConfig::new(temperature)?;
    check_pair_inputs(y, s)?;
    let n = y.len() as f64;
    let y_bar = y.iter().sum::<f64>() / n;
    let scale = -2.0 / (n * n);
    let cotangent: Vec<f64> = y.iter().map(|&yi| scale * (yi - y_bar)).collect();
    let soft = softrank(s, &cfg)?;
    let value = cotangent
        .iter()
        .zip(soft.values())
        .map(|(c, r)| c * r)
        .sum();
    let grad_scores = soft.vjp(&cotangent)?;
    Ok(LossValueGrad { value, grad_scores })
}

/// Hard-rank form of the Gini loss, `-(2/n^2) (sum_i y_i rank_i - mean(y) n(n+1)/2)`.
pub fn gini_rank_loss(y: &[f64], s: &[f64]) -> Result<f64> {
    check_pair_inputs(y, s)?;
    let ranks = crate::ranks::rank(s)?;
    let n = y.len() as f64;
    let y_bar = y.iter().sum::<f64>() / n;
    let dot: f64 = y.iter().zip(&ranks).map(|(a, r)| a * r).sum();
    Ok(-2.0 / (n * n) * (dot - y_bar * n * (n + 1.0) / 2.0))
}

/// Mean squared error and its gradient `2(s - y)/n`.
pub fn mse_loss(y: &[f64], s: &[f64]) -> Result<LossValueGrad> {
    ensure_same_len(y.len(), s.len())?;
    if y.is_empty() {
        return Err(CairoError::TooFewRows(0));
    }
    let n = y.len() as f64;
    let value = y.iter().zip(s).map(|(a, b)| (b - a) * (b - a)).sum::<f64>() / n;
    let grad_scores = y.iter().zip(s).map(|(a, b)| 2.0 * (b - a) / n).collect();
    Ok(LossValueGrad { value, grad_scores })
}

/// Uniform hard loss averaged over unordered pairs, and the Kendall U-statistic
/// `1/(n(n-1)) sum_{i != j} sign(y_i - y_j) sign(s_i - s_j)`.
/// On tie-free data `loss = (1 - tau) / 2` exactly.
pub fn kendall_identity_check(y: &[f64], s: &[f64]) -> Result<(f64, f64)> {
    check_pair_inputs(y, s)?;
    find_tie(y, "targets")?;
    find_tie(s, "scores")?;
    let n = y.len();
    let mut misordered = 0u64;
    let mut sign_sum = 0i64;
    for i in 0..n {
        for j in (i + 1)..n {
            let prod = (y[i] - y[j]) * (s[i] - s[j]);
            if prod <= 0.0 {
                misordered += 1;
            }
            // every unordered pair appears twice in the ordered sum
            sign_sum += if prod > 0.0 { 2 } else { -2 };
        }
    }
    let unordered = (n * (n - 1) / 2) as f64;
    let loss = misordered as f64 / unordered;
    let tau = sign_sum as f64 / (n * (n - 1)) as f64;
    Ok((loss, tau))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_weight_examples() {
        assert_eq!(
            pair_weight(WeightVariant::Uniform, 5.0, -1.0, 0.0, 0.0),
            1.0
        );
        assert_eq!(
            pair_weight(WeightVariant::AbsoluteGap, 3.0, 1.0, 0.0, 0.0),
            2.0
        );
        let cdf = mid_distribution(&[10.0, 20.0, 30.0]).unwrap();
        let w = pair_weight(WeightVariant::RankGap, 10.0, 30.0, cdf[0], cdf[2]);
        assert!((w - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(
            w,
            pair_weight(WeightVariant::RankGap, 30.0, 10.0, cdf[2], cdf[0])
        );
    }

    #[test]
    fn hard_loss_examples() {
        let u = WeightVariant::Uniform;
        assert_eq!(
            hard_pairwise_loss(&[1.0, 2.0], &[1.0, 2.0], u).unwrap(),
            0.0
        );
        assert_eq!(
            hard_pairwise_loss(&[1.0, 2.0], &[2.0, 1.0], u).unwrap(),
            0.5
        );
        let v = hard_pairwise_loss(
            &[1.0, 2.0, 3.0],
            &[3.0, 2.0, 1.0],
            WeightVariant::AbsoluteGap,
        )
        .unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn hard_loss_counts_double_ties() {
        // tied targets with tied scores: misordered under uniform, zero weight otherwise
        let y = [1.0, 1.0];
        let s = [0.0, 0.0];
        assert_eq!(
            hard_pairwise_loss(&y, &s, WeightVariant::Uniform).unwrap(),
            0.5
        );
        assert_eq!(
            hard_pairwise_loss(&y, &s, WeightVariant::AbsoluteGap).unwrap(),
            0.0
        );
        assert_eq!(
            hard_pairwise_loss(&y, &s, WeightVariant::RankGap).unwrap(),
            0.0
        );
    }

    #[test]
    fn hard_loss_length_mismatch() {
        assert!(matches!(
            hard_pairwise_loss(&[1.0, 2.0], &[1.0], WeightVariant::Uniform),
            Err(CairoError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn ordered_loss_examples() {
        assert_eq!(
            hard_pairwise_loss_ordered(&[1.0, 2.0], &[2.0, 1.0], WeightVariant::Uniform).unwrap(),
            0.5
        );
        for v in WeightVariant::ALL {
            assert_eq!(
                hard_pairwise_loss_ordered(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], v).unwrap(),
                0.0
            );
        }
    }

    #[test]
    fn ordered_loss_rejects_ties() {
        match hard_pairwise_loss_ordered(&[1.0, 2.0, 1.0], &[0.0, 1.0, 2.0], WeightVariant::Uniform)
        {
            Err(CairoError::Ties {
                what,
                first,
                second,
            }) => {
                assert_eq!(what, "targets");
                assert_eq!((first, second), (0, 2));
            }
            other => panic!("{other:?}"),
        }
        assert!(
            hard_pairwise_loss_ordered(&[1.0, 2.0], &[5.0, 5.0], WeightVariant::Uniform).is_err()
        );
    }

    #[test]
    fn surrogate_examples() {
        let r =
            surrogate_pairwise_loss(&[1.0, 2.0], &[0.0, 0.0], WeightVariant::Uniform, 1.0).unwrap();
        assert!((r.value - std::f64::consts::LN_2 / 2.0).abs() < 1e-15);
        let r = surrogate_pairwise_loss(&[2.0, 1.0], &[800.0, 0.0], WeightVariant::Uniform, 1.0)
            .unwrap();
        assert!(r.value < 1e-300);
        assert!(r.grad_scores.iter().all(|g| g.is_finite()));
        assert!(
            surrogate_pairwise_loss(&[1.0, 2.0], &[0.0, 0.0], WeightVariant::Uniform, 0.0).is_err()
        );
    }

    #[test]
    fn natural_log_surrogate_undercuts_a_narrowly_misordered_pair() {
        // softplus(0.1) = 0.744 < 1, so one barely swapped pair breaks the bound
        let y = [1.0, 0.0];
        let s = [0.0, 0.1];
        let hard = hard_pairwise_loss_ordered(&y, &s, WeightVariant::Uniform).unwrap();
        let soft = surrogate_pairwise_loss(&y, &s, WeightVariant::Uniform, 1.0).unwrap();
        assert_eq!(hard, 0.5);
        assert!(soft.value < hard);
        // past a margin of ln(e - 1) the pair term alone exceeds 1
        let margin = (std::f64::consts::E - 1.0).ln() + 1e-9;
        let far = surrogate_pairwise_loss(&y, &[0.0, margin], WeightVariant::Uniform, 1.0).unwrap();
        assert!(far.value >= hard);
    }

    #[test]
    fn surrogate_gradient_finite_differences() {
        let y = [0.3, 1.7, -0.4, 2.2, 0.9, 1.1];
        let s = [0.1, -0.5, 0.7, 0.2, -1.3, 0.4];
        for variant in WeightVariant::ALL {
            let r = surrogate_pairwise_loss(&y, &s, variant, 1.3).unwrap();
            let h = 1e-5;
            for k in 0..s.len() {
                let mut up = s;
                let mut dn = s;
                up[k] += h;
                dn[k] -= h;
                let fd = (surrogate_pairwise_loss(&y, &up, variant, 1.3)
                    .unwrap()
                    .value
                    - surrogate_pairwise_loss(&y, &dn, variant, 1.3)
                        .unwrap()
                        .value)
                    / (2.0 * h);
                let g = r.grad_scores[k];
                assert!(
                    (fd - g).abs() <= 1e-5 * g.abs().max(1e-4),
                    "{variant:?} k={k}"
                );
            }
        }
    }

    #[test]
    fn soft_gini_examples() {
        let r = soft_gini_loss(&[2.0, 2.0, 2.0], &[0.1, 0.5, 0.3], 0.1).unwrap();
        assert_eq!(r.value, 0.0);
        assert!(r.grad_scores.iter().all(|&g| g == 0.0));

        let r = soft_gini_loss(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], 1e-4).unwrap();
        assert!((r.value + 4.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn soft_gini_gradient_finite_differences() {
        let y = [0.3, 1.7, -0.4, 2.2, 0.9];
        let s = [0.1, -0.5, 0.7, 0.2, -1.3];
        let r = soft_gini_loss(&y, &s, 0.4).unwrap();
        let h = 1e-5;
        for k in 0..s.len() {
            let mut up = s;
            let mut dn = s;
            up[k] += h;
            dn[k] -= h;
            let fd = (soft_gini_loss(&y, &up, 0.4).unwrap().value
                - soft_gini_loss(&y, &dn, 0.4).unwrap().value)
                / (2.0 * h);
            assert!((fd - r.grad_scores[k]).abs() <= 1e-5 * fd.abs().max(1e-4));
        }
    }

    #[test]
    fn mse_examples() {
        let r = mse_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.grad_scores, vec![0.0, 0.0]);
        let r = mse_loss(&[0.0], &[2.0]).unwrap();
        assert_eq!((r.value, r.grad_scores[0]), (4.0, 4.0));
        assert_eq!(mse_loss(&[0.0, 0.0], &[1.0, -1.0]).unwrap().value, 1.0);
        assert!(mse_loss(&[0.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn kendall_identity_examples() {
        let y = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(kendall_identity_check(&y, &y).unwrap(), (0.0, 1.0));
        assert_eq!(
            kendall_identity_check(&[1.0, 2.0], &[2.0, 1.0]).unwrap(),
            (1.0, -1.0)
        );
        assert!(kendall_identity_check(&[1.0, 1.0], &[2.0, 1.0]).is_err());
    }

    #[test]
    fn loss_spec_serde_and_validation() {
        let spec = LossSpec::ranknet_giniw();
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(
            json,
            r#"{"objective":"pairwise-surrogate","variant":"absolute-gap","sigma":1.0}"#
        );
        assert_eq!(serde_json::from_str::<LossSpec>(&json).unwrap(), spec);
        assert!(LossSpec::SoftGini { temperature: -1.0 }.validate().is_err());
        assert!(LossSpec::gininet_softrank().is_ranking());
        assert!(!LossSpec::PointwiseMse.is_ranking());
    }
}
