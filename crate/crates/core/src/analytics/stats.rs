//! Group-comparison statistics: Mann-Whitney U, t-tests and Cohen's kappa.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("sample {0} is empty")]
    EmptySample(&'static str),
    #[error("sample {which} needs at least {needed} values, got {got}")]
    TooFewValues { which: &'static str, needed: usize, got: usize },
    #[error("all values are identical across both groups")]
    DegenerateSample,
    #[error("both groups have zero variance")]
    ZeroVariance,
    #[error("sample {0} contains a non-finite value")]
    NonFinite(&'static str),
    #[error("confusion matrix must be square and non-empty")]
    NotSquare,
    #[error("confusion matrix has no observations")]
    EmptyMatrix,
    #[error("expected agreement is 1 but observed agreement is not")]
    DegenerateAgreement,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    MannWhitney,
    TTest,
    Kappa,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatResult {
    pub method: Method,
    /// U for group a, t, or kappa.
    pub statistic: f64,
    /// Two-sided.
    pub p_value: f64,
    /// Rank-biserial r, Cohen's d, or kappa.
    pub effect_size: f64,
    pub n1: usize,
    pub n2: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub df: Option<f64>,
    /// Whether p came from the exact null distribution.
    #[serde(default)]
    pub exact: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub median_a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub median_b: Option<f64>,
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn check(which: &'static str, xs: &[f64]) -> Result<(), StatsError> {
    if xs.is_empty() {
        return Err(StatsError::EmptySample(which));
    }
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(StatsError::NonFinite(which));
    }
    Ok(())
}

/// 1-based midranks of the pooled sample; returns ranks for `a` then `b`,
/// plus the tie group sizes.
fn midranks(a: &[f64], b: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&i, &j| pooled[i].total_cmp(&pooled[j]));
    let mut ranks = vec![0.0; pooled.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && pooled[order[j + 1]] == pooled[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        ties.push(j - i + 1);
        i = j + 1;
    }
    (ranks, ties)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PMethod {
    /// Exact when n1 + n2 <= 12 and there are no ties, otherwise normal approximation.
    #[default]
    Auto,
    /// Exact permutation distribution of the (mid)rank sum, ties included.
    Exact,
    /// Normal approximation with tie and continuity corrections.
    Asymptotic,
}

pub const EXACT_LIMIT: usize = 12;

/// Mann-Whitney U test of `a` against `b` with the default p-value method.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<StatResult, StatsError> {
    mann_whitney_u_with(a, b, PMethod::Auto)
}

pub fn mann_whitney_u_with(a: &[f64], b: &[f64], method: PMethod) -> Result<StatResult, StatsError> {
    check("a", a)?;
    check("b", b)?;
    let (n1, n2) = (a.len(), b.len());
    let (ranks, ties) = midranks(a, b);
    if ties.len() == 1 {
        return Err(StatsError::DegenerateSample);
    }
    let r1: f64 = ranks[..n1].iter().sum();
    let u = r1 - (n1 * (n1 + 1)) as f64 / 2.0;
    let nn = (n1 * n2) as f64;
    let has_ties = ties.iter().any(|&t| t > 1);
    let exact = match method {
        PMethod::Auto => n1 + n2 <= EXACT_LIMIT && !has_ties,
        PMethod::Exact => true,
        PMethod::Asymptotic => false,
    };
    let p = if exact { exact_p(&ranks, n1, r1) } else { normal_p(u, n1, n2, &ties) };
    Ok(StatResult {
        method: Method::MannWhitney,
        statistic: u,
        p_value: p,
        effect_size: 1.0 - 2.0 * u / nn,
        n1,
        n2,
        df: None,
        exact,
        mean_a: Some(mean(a)),
        mean_b: Some(mean(b)),
        median_a: Some(median(a)),
        median_b: Some(median(b)),
    })
}

/// Two-sided exact p from the permutation distribution of the rank sum of a
/// size-`n1` subset. Ranks are doubled so midranks stay integral.
fn exact_p(ranks: &[f64], n1: usize, r1: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (r * 2.0).round() as usize).collect();
    let max_sum: usize = doubled.iter().sum();
    // counts[k][s]: number of k-subsets with doubled rank sum s.
    let mut counts = vec![vec![0.0f64; max_sum + 1]; n1 + 1];
    counts[0][0] = 1.0;
    for &w in &doubled {
        for k in (1..=n1).rev() {
            let (lo, hi) = counts.split_at_mut(k);
            let (prev, cur) = (&lo[k - 1], &mut hi[0]);
            for s in (w..=max_sum).rev() {
                cur[s] += prev[s - w];
            }
        }
    }
    let dist = &counts[n1];
    let total: f64 = dist.iter().sum();
    let observed = (r1 * 2.0).round() as usize;
    let lower: f64 = dist[..=observed].iter().sum();
    let upper: f64 = dist[observed..].iter().sum();
    (2.0 * lower.min(upper) / total).min(1.0)
}

fn normal_p(u: f64, n1: usize, n2: usize, ties: &[usize]) -> f64 {
    let (n1f, n2f) = (n1 as f64, n2 as f64);
    let n = n1f + n2f;
    let mu = n1f * n2f / 2.0;
    let tie_sum: f64 = ties.iter().map(|&t| (t as f64).powi(3) - t as f64).sum();
    let var = n1f * n2f / 12.0 * ((n + 1.0) - tie_sum / (n * (n - 1.0)));
    if var <= 0.0 {
        return 1.0;
    }
    let z = ((u - mu).abs() - 0.5).max(0.0) / var.sqrt();
    let std = Normal::standard();
    (2.0 * std.sf(z)).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TTestVariant {
    #[default]
    Welch,
    Pooled,
}

/// Independent two-sample t-test with Cohen's d (pooled SD) as effect size.
pub fn t_test(a: &[f64], b: &[f64], variant: TTestVariant) -> Result<StatResult, StatsError> {
    check("a", a)?;
    check("b", b)?;
    for (which, xs) in [("a", a), ("b", b)] {
        if xs.len() < 2 {
            return Err(StatsError::TooFewValues { which, needed: 2, got: xs.len() });
        }
    }
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let (m1, m2) = (mean(a), mean(b));
    let (v1, v2) = (variance(a), variance(b));
    if v1 == 0.0 && v2 == 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    let pooled_var = ((n1 - 1.0) * v1 + (n2 - 1.0) * v2) / (n1 + n2 - 2.0);
    let (t, df) = match variant {
        TTestVariant::Pooled => ((m1 - m2) / (pooled_var * (1.0 / n1 + 1.0 / n2)).sqrt(), n1 + n2 - 2.0),
        TTestVariant::Welch => {
            let (s1, s2) = (v1 / n1, v2 / n2);
            let df = (s1 + s2).powi(2) / (s1 * s1 / (n1 - 1.0) + s2 * s2 / (n2 - 1.0));
            ((m1 - m2) / (s1 + s2).sqrt(), df)
        }
    };
    let dist = StudentsT::new(0.0, 1.0, df).expect("df is positive");
    let p = (2.0 * dist.sf(t.abs())).min(1.0);
    Ok(StatResult {
        method: Method::TTest,
        statistic: t,
        p_value: p,
        effect_size: (m1 - m2) / pooled_var.sqrt(),
        n1: a.len(),
        n2: b.len(),
        df: Some(df),
        exact: false,
        mean_a: Some(m1),
        mean_b: Some(m2),
        median_a: Some(median(a)),
        median_b: Some(median(b)),
    })
}

/// Cohen's kappa for a K×K confusion matrix (rows: rater 1, columns: rater 2).
///
/// The p-value is a two-sided z-test of kappa = 0 using the large-sample
/// standard error under the null (Fleiss, Cohen and Everitt).
pub fn cohen_kappa(confusion: &[Vec<u64>]) -> Result<StatResult, StatsError> {
    let k = confusion.len();
    if k == 0 || confusion.iter().any(|row| row.len() != k) {
        return Err(StatsError::NotSquare);
    }
    let total: u64 = confusion.iter().flatten().sum();
    if total == 0 {
        return Err(StatsError::EmptyMatrix);
    }
    let rows: Vec<u64> = confusion.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<u64> = (0..k).map(|j| confusion.iter().map(|r| r[j]).sum()).collect();
    let trace: u64 = (0..k).map(|i| confusion[i][i]).sum();
    // Work in integers as long as possible: kappa = (T·trace − Σ r c) / (T² − Σ r c).
    let t = u128::from(total);
    let chance: u128 = rows.iter().zip(&cols).map(|(&r, &c)| u128::from(r) * u128::from(c)).sum();
    let (p_o, p_e) = (trace as f64 / total as f64, chance as f64 / (t * t) as f64);
    let kappa = if chance == t * t {
        if u128::from(trace) == t {
            1.0
        } else {
            return Err(StatsError::DegenerateAgreement);
        }
    } else {
        (t as f64 * trace as f64 - chance as f64) / ((t * t) as f64 - chance as f64)
    };
    let n = total as f64;
    let marg3: f64 = rows
        .iter()
        .zip(&cols)
        .map(|(&r, &c)| (r as f64 / n) * (c as f64 / n) * ((r + c) as f64 / n))
        .sum();
    let se0_sq = (p_e + p_e * p_e - marg3) / (n * (1.0 - p_e).powi(2));
    let p = if p_e >= 1.0 || !(se0_sq > 0.0) {
        1.0
    } else {
        let z = kappa / se0_sq.sqrt();
        (2.0 * Normal::standard().sf(z.abs())).min(1.0)
    };
    Ok(StatResult {
        method: Method::Kappa,
        statistic: kappa,
        p_value: p,
        effect_size: kappa,
        n1: total as usize,
        n2: total as usize,
        df: None,
        exact: false,
        mean_a: Some(p_o),
        mean_b: Some(p_e),
        median_a: None,
        median_b: None,
    })
}
