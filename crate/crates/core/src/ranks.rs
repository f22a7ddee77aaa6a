//! Mid-ranks, empirical CDFs, the mid-distribution function and a
//! pairwise-sigmoid softrank with an exact vector-Jacobian product.
//!
//! Ties always follow the mid-rank convention: tied values share the
//! average of the ranks they span, so `sum(rank) = n(n+1)/2` holds exactly.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, CairoError, Result};

/// Mid-ranks in `1..=n`: `rank_i = #{s_j < s_i} + (#{s_j = s_i} + 1) / 2`.
pub fn rank(scores: &[f64]) -> Result<Vec<f64>> {
    ensure_finite(scores, "scores")?;
    if scores.is_empty() {
        return Err(CairoError::InvalidParameter(
            "rank of an empty vector".into(),
        ));
    }
    Ok(mid_ranks_unchecked(scores))
}

pub(crate) fn mid_ranks_unchecked(scores: &[f64]) -> Vec<f64> {
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let mid = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = mid;
        }
        start = end;
    }
    ranks
}

/// `rank(scores) / n`.
pub fn empirical_cdf(scores: &[f64]) -> Result<Vec<f64>> {
    let n = scores.len() as f64;
    Ok(rank(scores)?.into_iter().map(|r| r / n).collect())
}

/// `F~_i = (#{s_j < s_i} + #{s_j = s_i} / 2) / n = (rank_i - 1/2) / n`.
/// Averages to exactly one half.
pub fn mid_distribution(scores: &[f64]) -> Result<Vec<f64>> {
    let n = scores.len() as f64;
    Ok(rank(scores)?.into_iter().map(|r| (r - 0.5) / n).collect())
}

/// Sigmoid width for [`softrank`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoftRankConfig {
    pub temperature: f64,
}

impl SoftRankConfig {
    pub const DEFAULT_TEMPERATURE: f64 = 0.1;

    pub fn new(temperature: f64) -> Result<Self> {
        let cfg = Self { temperature };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.temperature > 0.0 && self.temperature.is_finite() {
            Ok(())
        } else {
            Err(CairoError::InvalidParameter(format!(
                "softrank temperature must be positive, got {}",
                self.temperature
            )))
        }
    }
}

impl Default for SoftRankConfig {
    fn default() -> Self {
        Self {
            temperature: Self::DEFAULT_TEMPERATURE,
        }
    }
}

/// Output of [`softrank`]: the relaxed ranks plus what is needed to apply
/// the transposed Jacobian.
#[derive(Debug, Clone)]
pub struct SoftRank {
    values: Vec<f64>,
    scores: Vec<f64>,
    temperature: f64,
}

/// Numerically stable logistic function.
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `softrank_i = 1 + sum_{j != i} sigmoid((s_i - s_j) / temperature)`.
///
/// O(n^2) in time, O(n) in memory. Each unordered pair contributes
/// `sigmoid(x)` to one side and `sigmoid(-x)` to the other, so the ranks sum
/// to `n(n+1)/2` up to rounding.
pub fn softrank(scores: &[f64], cfg: &SoftRankConfig) -> Result<SoftRank> {
    cfg.validate()?;
    ensure_finite(scores, "scores")?;
    if scores.is_empty() {
        return Err(CairoError::InvalidParameter(
            "softrank of an empty vector".into(),
        ));
    }
    let n = scores.len();
    let inv_t = 1.0 / cfg.temperature;
    let mut values = vec![1.0; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let x = (scores[i] - scores[j]) * inv_t;
            values[i] += sigmoid(x);
            values[j] += sigmoid(-x);
        }
    }
    Ok(SoftRank {
        values,
        scores: scores.to_vec(),
        temperature: cfg.temperature,
    })
}

impl SoftRank {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// `v^T (d softrank / d s)`.
    ///
    /// With `p_kj = sigmoid'((s_k - s_j)/t) / t`, which is symmetric in
    /// (k, j), the k-th entry is `sum_{j != k} p_kj (v_k - v_j)`.
    pub fn vjp(&self, cotangent: &[f64]) -> Result<Vec<f64>> {
        crate::error::ensure_same_len(self.values.len(), cotangent.len())?;
        let n = self.values.len();
        let inv_t = 1.0 / self.temperature;
        let mut grad = vec![0.0; n];
        for k in 0..n {
            for j in (k + 1)..n {
                let x = (self.scores[k] - self.scores[j]) * inv_t;
                let p = sigmoid(x) * sigmoid(-x) * inv_t;
                let contrib = p * (cotangent[k] - cotangent[j]);
                grad[k] += contrib;
                grad[j] -= contrib;
            }
        }
        Ok(grad)
    }
}

/// Ties in `values`, reported as the first offending pair of indices.
pub(crate) fn find_tie(values: &[f64], what: &'static str) -> Result<()> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    for w in order.windows(2) {
        if values[w[0]] == values[w[1]] {
            return Err(CairoError::Ties {
                what,
                first: w[0],
                second: w[1],
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn rank_examples() {
        assert_eq!(rank(&[0.3, 0.1, 0.2]).unwrap(), vec![3.0, 1.0, 2.0]);
        assert_eq!(rank(&[1.0, 1.0, 2.0]).unwrap(), vec![1.5, 1.5, 3.0]);
        assert_eq!(rank(&[7.0]).unwrap(), vec![1.0]);
    }

    #[test]
    fn rank_rejects_nonfinite_and_empty() {
        assert!(matches!(
            rank(&[1.0, f64::NAN]),
            Err(CairoError::NonFinite(_))
        ));
        assert!(rank(&[]).is_err());
    }

    #[test]
    fn rank_matches_counting_definition() {
        let s = [3.0, 1.0, 3.0, 2.0, 3.0, 1.0, 0.5];
        let r = rank(&s).unwrap();
        for (i, &si) in s.iter().enumerate() {
            let less = s.iter().filter(|&&x| x < si).count() as f64;
            let eq = s.iter().filter(|&&x| x == si).count() as f64;
            assert_eq!(r[i], less + (eq + 1.0) / 2.0);
        }
        assert_eq!(r.iter().sum::<f64>(), 28.0);
    }

    #[test]
    fn empirical_cdf_examples() {
        assert!(close(
            &empirical_cdf(&[0.3, 0.1, 0.2]).unwrap(),
            &[1.0, 1.0 / 3.0, 2.0 / 3.0],
            1e-15
        ));
        assert_eq!(empirical_cdf(&[1.0, 1.0]).unwrap(), vec![0.75, 0.75]);
        let inc: Vec<f64> = (0..5).map(f64::from).collect();
        assert!(close(
            &empirical_cdf(&inc).unwrap(),
            &[0.2, 0.4, 0.6, 0.8, 1.0],
            1e-15
        ));
    }

    #[test]
    fn mid_distribution_examples() {
        assert!(close(
            &mid_distribution(&[1.0, 1.0, 2.0]).unwrap(),
            &[1.0 / 3.0, 1.0 / 3.0, 5.0 / 6.0],
            1e-15
        ));
        assert_eq!(
            mid_distribution(&[4.0, 1.0, 2.0, 3.0]).unwrap(),
            vec![0.875, 0.125, 0.375, 0.625]
        );
        assert_eq!(mid_distribution(&[2.0, 2.0]).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn softrank_examples() {
        let cfg = SoftRankConfig::new(0.7).unwrap();
        assert_eq!(softrank(&[0.0, 0.0], &cfg).unwrap().values(), &[1.5, 1.5]);
        let cfg = SoftRankConfig::new(0.01).unwrap();
        assert!(close(
            softrank(&[0.0, 10.0], &cfg).unwrap().values(),
            &[1.0, 2.0],
            1e-6
        ));
    }

    #[test]
    fn softrank_rejects_bad_temperature() {
        assert!(SoftRankConfig::new(0.0).is_err());
        assert!(SoftRankConfig::new(-1.0).is_err());
        let bad = SoftRankConfig { temperature: 0.0 };
        assert!(softrank(&[1.0, 2.0], &bad).is_err());
    }

    #[test]
    fn softrank_vjp_matches_finite_differences() {
        let s = [0.3, -1.2, 0.8, 0.05, 2.1, -0.4];
        let v = [0.5, -1.0, 2.0, 0.3, -0.7, 1.1];
        let cfg = SoftRankConfig::new(0.5).unwrap();
        let g = softrank(&s, &cfg).unwrap().vjp(&v).unwrap();
        let h = 1e-5;
        for k in 0..s.len() {
            let mut up = s;
            let mut dn = s;
            up[k] += h;
            dn[k] -= h;
            let f = |x: &[f64]| -> f64 {
                softrank(x, &cfg)
                    .unwrap()
                    .values()
                    .iter()
                    .zip(&v)
                    .map(|(a, b)| a * b)
                    .sum()
            };
            let fd = (f(&up) - f(&dn)) / (2.0 * h);
            assert!(
                (fd - g[k]).abs() <= 1e-5 * fd.abs().max(1e-3),
                "k={k} fd={fd} g={}",
                g[k]
            );
        }
    }

    #[test]
    fn find_tie_reports_indices() {
        match find_tie(&[3.0, 1.0, 3.0], "y") {
            Err(CairoError::Ties { first, second, .. }) => assert_eq!((first, second), (0, 2)),
            other => panic!("{other:?}"),
        }
        assert!(find_tie(&[1.0, 2.0], "y").is_ok());
    }
}
