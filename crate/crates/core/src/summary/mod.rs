//! Posterior means, standard deviations and 95% central credibility
//! intervals, for parameters and for linear combinations of coefficients.
//!
//! Quantiles interpolate linearly between closest ranks: for sorted draws
//! `x_1..x_n` the `q` quantile is read at position `1 + (n - 1) q`.

mod expr;

use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::data::TransformRecord;
use crate::gibbs::{v_entries, SampleStore};

pub use expr::DerivedExpression;

pub const CCI_LOW: f64 = 0.025;
pub const CCI_HIGH: f64 = 0.975;

/// Potential scale reduction above this value triggers a warning.
pub const PSRF_WARN: f64 = 1.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SummaryError {
    #[error("no draws to summarize")]
    Empty,
    #[error("unknown coefficient {0}")]
    UnknownCoefficient(String),
    #[error("expression {name}: {message}")]
    Expression { name: String, message: String },
    #[error("coefficient {name} uses a {transform} column and has no original-unit slope")]
    NotInvertible { name: String, transform: String },
    #[error("convergence diagnostic: {0}")]
    Psrf(String),
    #[error("histogram: {0}")]
    Histogram(String),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParameterSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub cci_low: f64,
    pub cci_high: f64,
}

/// Linear-interpolation quantile of already sorted values.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize_values(name: &str, xs: &[f64]) -> Result<ParameterSummary, SummaryError> {
    if xs.is_empty() {
        return Err(SummaryError::Empty);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = if xs.len() > 1 {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(ParameterSummary {
        name: name.to_string(),
        mean,
        sd,
        cci_low: quantile_sorted(&sorted, CCI_LOW),
        cci_high: quantile_sorted(&sorted, CCI_HIGH),
    })
}

/// Display labels of the stored `V` entries: `Var(u1)`, `Cov(u1,u2)`, ...
pub fn v_labels(r: usize) -> Vec<String> {
    v_entries(r)
        .into_iter()
        .map(|(a, b)| {
            if a == b {
                format!("Var(u{})", a + 1)
            } else {
                format!("Cov(u{},u{})", a + 1, b + 1)
            }
        })
        .collect()
}

/// Every scalar in the store as `(label, draws)`: coefficients, `sigma2`,
/// then the `V` entries.
pub fn scalar_series(store: &SampleStore) -> Vec<(String, Vec<f64>)> {
    let mut out: Vec<(String, Vec<f64>)> = store
        .coef_names()
        .iter()
        .enumerate()
        .map(|(p, name)| (name.clone(), store.beta_column(p)))
        .collect();
    out.push(("sigma2".into(), store.sigma2().to_vec()));
    for ((a, b), label) in v_entries(store.n_random())
        .into_iter()
        .zip(v_labels(store.n_random()))
    {
        out.push((label, store.v_column(a, b)));
    }
    out
}

pub fn summarize(store: &SampleStore) -> Result<Vec<ParameterSummary>, SummaryError> {
    scalar_series(store)
        .iter()
        .map(|(name, xs)| summarize_values(name, xs))
        .collect()
}

pub fn summarize_expression(
    store: &SampleStore,
    expr: &DerivedExpression,
) -> Result<ParameterSummary, SummaryError> {
    let values = expr.evaluate(store)?;
    summarize_values(&expr.name, &values)
}

/// Re-express a coefficient summary in original predictor units by dividing
/// by the column's scaling constant.
pub fn back_transform(
    summary: &ParameterSummary,
    record: &TransformRecord,
) -> Result<ParameterSummary, SummaryError> {
    if !record.is_slope() {
        return Err(SummaryError::NotInvertible {
            name: summary.name.clone(),
            transform: record.transform.to_string(),
        });
    }
    let d = record.divisor;
    let (lo, hi) = if d > 0.0 {
        (summary.cci_low / d, summary.cci_high / d)
    } else {
        (summary.cci_high / d, summary.cci_low / d)
    };
    Ok(ParameterSummary {
        name: summary.name.clone(),
        mean: summary.mean / d,
        sd: summary.sd / d.abs(),
        cci_low: lo,
        cci_high: hi,
    })
}

/// Split-chain potential scale reduction of one scalar. Every chain must
/// have the same length, at least 10; each is halved before comparison.
pub fn psrf(chains: &[Vec<f64>]) -> Result<f64, SummaryError> {
    if chains.len() < 2 {
        return Err(SummaryError::Psrf(format!(
            "needs at least 2 chains, got {}",
            chains.len()
        )));
    }
    let len = chains[0].len();
    if chains.iter().any(|c| c.len() != len) {
        return Err(SummaryError::Psrf("chains have different lengths".into()));
    }
    if len < 10 {
        return Err(SummaryError::Psrf(format!(
            "needs at least 10 draws per chain, got {len}"
        )));
    }
    let half = len / 2;
    let halves: Vec<&[f64]> = chains
        .iter()
        .flat_map(|c| [&c[..half], &c[len - half..]])
        .collect();
    let m = halves.len() as f64;
    let n = half as f64;
    let stats: Vec<(f64, f64)> = halves
        .iter()
        .map(|h| {
            let mean = h.iter().sum::<f64>() / n;
            let var = h.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (mean, var)
        })
        .collect();
    let grand = stats.iter().map(|s| s.0).sum::<f64>() / m;
    let b = n * stats.iter().map(|s| (s.0 - grand).powi(2)).sum::<f64>() / (m - 1.0);
    let w = stats.iter().map(|s| s.1).sum::<f64>() / m;
    if w == 0.0 {
        return Ok(if b == 0.0 { 1.0 } else { f64::INFINITY });
    }
    let var_plus = (n - 1.0) / n * w + b / n;
    Ok((var_plus / w).sqrt())
}

/// Potential scale reduction for every scalar in a multi-chain store.
pub fn psrf_store(store: &SampleStore) -> Result<Vec<(String, f64)>, SummaryError> {
    let ranges = store.chain_ranges();
    scalar_series(store)
        .into_iter()
        .map(|(name, xs)| {
            let chains: Vec<Vec<f64>> = ranges.iter().map(|r| xs[r.clone()].to_vec()).collect();
            psrf(&chains).map(|v| (name, v))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HistogramBin {
    pub bin_left: f64,
    pub bin_right: f64,
    pub count: usize,
}

/// Equal-width bins over `[min, max]`; the last bin is closed on the right.
pub fn histogram(xs: &[f64], bins: usize) -> Result<Vec<HistogramBin>, SummaryError> {
    if xs.is_empty() {
        return Err(SummaryError::Empty);
    }
    if bins == 0 {
        return Err(SummaryError::Histogram("bin count must be positive".into()));
    }
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(SummaryError::Histogram("draws are not finite".into()));
    }
    if lo == hi {
        return Ok(vec![HistogramBin {
            bin_left: lo,
            bin_right: hi,
            count: xs.len(),
        }]);
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &x in xs {
        let k = (((x - lo) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(k, count)| HistogramBin {
            bin_left: lo + k as f64 * width,
            bin_right: if k + 1 == bins {
                hi
            } else {
                lo + (k + 1) as f64 * width
            },
            count,
        })
        .collect())
}

pub fn histogram_tsv(bins: &[HistogramBin]) -> String {
    let mut out = String::from("bin_left\tbin_right\tcount\n");
    for b in bins {
        let _ = writeln!(out, "{}\t{}\t{}", b.bin_left, b.bin_right, b.count);
    }
    out
}

pub fn summaries_tsv(rows: &[ParameterSummary]) -> String {
    let mut out = String::from("name\tmean\tsd\tcci_low\tcci_high\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            r.name, r.mean, r.sd, r.cci_low, r.cci_high
        );
    }
    out
}

pub fn summaries_json(rows: &[ParameterSummary]) -> String {
    serde_json::to_string_pretty(rows).expect("summaries serialize")
}
