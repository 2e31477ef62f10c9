//! Rank and linear correlation coefficients.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Precondition(format!(
            "correlation inputs differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::Precondition(
            "correlation needs at least two samples".into(),
        ));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::Precondition(
            "correlation inputs must be finite".into(),
        ));
    }
    Ok(())
}

/// Kendall's tau-b (tie-corrected), by pair enumeration.
pub fn kendall_tau(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check(pred, truth)?;
    let n = pred.len();
    let (mut concordant, mut discordant) = (0i64, 0i64);
    let (mut ties_pred, mut ties_truth) = (0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let dp = pred[i].partial_cmp(&pred[j]).expect("finite");
            let dt = truth[i].partial_cmp(&truth[j]).expect("finite");
            use std::cmp::Ordering::Equal;
            match (dp, dt) {
                (Equal, Equal) => {}
                (Equal, _) => ties_pred += 1,
                (_, Equal) => ties_truth += 1,
                (a, b) if a == b => concordant += 1,
                _ => discordant += 1,
            }
        }
    }
    let denom = (((concordant + discordant + ties_pred) as f64)
        * ((concordant + discordant + ties_truth) as f64))
        .sqrt();
    if denom == 0.0 {
        return Err(Error::UndefinedCorrelation("a ranking is constant"));
    }
    Ok((concordant - discordant) as f64 / denom)
}

/// Pearson's product-moment correlation.
pub fn pearson_r(a: &[f64], b: &[f64]) -> Result<f64> {
    check(a, b)?;
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return Err(Error::UndefinedCorrelation("zero variance"));
    }
    Ok((cov / (va.sqrt() * vb.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let avg = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

/// Spearman's rho: Pearson correlation of average ranks.
pub fn spearman_rho(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check(pred, truth)?;
    pearson_r(&average_ranks(pred), &average_ranks(truth))
}

/// Correlations between predicted and true scores. Both are losses (lower is
/// better), so +1 means the prediction orders architectures perfectly.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankingReport {
    pub kendall_tau: f64,
    pub spearman_rho: f64,
    pub pearson_r: f64,
    pub n: usize,
}

impl RankingReport {
    pub fn compute(pred: &[f64], truth: &[f64]) -> Result<RankingReport> {
        Ok(RankingReport {
            kendall_tau: kendall_tau(pred, truth)?,
            spearman_rho: spearman_rho(pred, truth)?,
            pearson_r: pearson_r(pred, truth)?,
            n: pred.len(),
        })
    }
}
