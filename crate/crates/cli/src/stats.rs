//! Kruskal-Wallis H test and Bonferroni correction.

use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("need at least two groups, got {0}")]
    TooFewGroups(usize),
    #[error("group {0} is empty")]
    EmptyGroup(usize),
    #[error("non-finite observation in group {0}")]
    NonFinite(usize),
    #[error("alpha must lie in (0, 1), got {0}")]
    BadAlpha(f64),
    #[error("no p-values to correct")]
    NoComparisons,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KruskalWallis {
    pub h: f64,
    pub p_value: f64,
    pub df: usize,
    /// All observations identical; `h = 0` and `p = 1` by convention.
    pub degenerate: bool,
}

/// Mid-ranks (1-based, ties averaged) of `values`.
pub fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

/// Tie-corrected H statistic with a chi-squared p-value on `groups - 1`
/// degrees of freedom.
pub fn kruskal_wallis(groups: &[Vec<f64>]) -> Result<KruskalWallis, StatsError> {
    if groups.len() < 2 {
        return Err(StatsError::TooFewGroups(groups.len()));
    }
    for (i, g) in groups.iter().enumerate() {
        if g.is_empty() {
            return Err(StatsError::EmptyGroup(i));
        }
        if g.iter().any(|x| !x.is_finite()) {
            return Err(StatsError::NonFinite(i));
        }
    }
    let all: Vec<f64> = groups.iter().flatten().copied().collect();
    let n = all.len() as f64;
    let df = groups.len() - 1;
    let r = ranks(&all);

    let mut sorted = all.clone();
    sorted.sort_by(f64::total_cmp);
    let mut tie_sum = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_sum += t * t * t - t;
        i = j + 1;
    }
    let correction = 1.0 - tie_sum / (n * n * n - n);
    if correction <= 0.0 || n < 2.0 {
        return Ok(KruskalWallis {
            h: 0.0,
            p_value: 1.0,
            df,
            degenerate: true,
        });
    }

    let mut offset = 0;
    let mut sum = 0.0;
    for g in groups {
        let rank_sum: f64 = r[offset..offset + g.len()].iter().sum();
        sum += rank_sum * rank_sum / g.len() as f64;
        offset += g.len();
    }
    let h = ((12.0 / (n * (n + 1.0)) * sum - 3.0 * (n + 1.0)) / correction).max(0.0);
    let chi = ChiSquared::new(df as f64).expect("df >= 1");
    Ok(KruskalWallis {
        h,
        p_value: chi.sf(h).clamp(0.0, 1.0),
        df,
        degenerate: false,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bonferroni {
    pub threshold: f64,
    pub significant: Vec<bool>,
    pub adjusted: Vec<f64>,
}

/// Significant iff `p < alpha / m`; adjusted `min(1, m p)`.
pub fn bonferroni(p_values: &[f64], alpha: f64) -> Result<Bonferroni, StatsError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(StatsError::BadAlpha(alpha));
    }
    if p_values.is_empty() {
        return Err(StatsError::NoComparisons);
    }
    let m = p_values.len() as f64;
    let threshold = alpha / m;
    Ok(Bonferroni {
        threshold,
        significant: p_values.iter().map(|&p| p < threshold).collect(),
        adjusted: p_values.iter().map(|&p| (m * p).min(1.0)).collect(),
    })
}
