//! Encompassing-prior model selection.
//!
//! For each hypothesis the proportion of prior draws and of encompassing
//! posterior draws that satisfy its constraints are estimated. Their ratio is
//! the Bayes factor against the encompassing model, and the posterior model
//! probabilities follow from the Bayes factors and the prior model
//! probabilities.

use std::fmt::Write as _;

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::constraints::ValidatedHypothesis;
use crate::gibbs::{draw_prior_beta, EncompassingPrior, SampleStore};

/// Number of batches for the batch-means standard error.
pub const BATCHES: usize = 50;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SelectionError {
    #[error("hypothesis {0} unsupported by prior sample; increase n")]
    Unsupported(String),
    #[error("no encompassing (unconstrained) hypothesis among the estimates")]
    NoEncompassing,
    #[error("prior and posterior estimates list different hypotheses")]
    Mismatch,
    #[error("prior model probabilities: {0}")]
    PriorModelProbs(String),
    #[error("no draws to evaluate")]
    Empty,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProportionEstimate {
    pub hypothesis: String,
    pub encompassing: bool,
    pub proportion: f64,
    pub n_draws: usize,
    /// Batch-means standard error for chain output, binomial otherwise.
    pub mc_se: f64,
    /// Binomial standard error ignoring autocorrelation.
    pub mc_se_naive: f64,
}

fn binomial_se(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Proportions of `n` independent prior draws of β satisfying each
/// hypothesis. All hypotheses are evaluated on the same draws.
pub fn prior_proportions<R: Rng + ?Sized>(
    prior: &EncompassingPrior,
    hyps: &[ValidatedHypothesis],
    n: usize,
    rng: &mut R,
) -> Result<Vec<ProportionEstimate>, SelectionError> {
    if n == 0 {
        return Err(SelectionError::Empty);
    }
    let mut row = vec![0.0; prior.beta_means.len()];
    let mut counts = vec![0usize; hyps.len()];
    for _ in 0..n {
        draw_prior_beta(prior, rng, &mut row);
        for (c, h) in counts.iter_mut().zip(hyps) {
            *c += usize::from(h.satisfies(&row));
        }
    }
    Ok(hyps
        .iter()
        .zip(counts)
        .map(|(h, c)| {
            let p = c as f64 / n as f64;
            let se = binomial_se(p, n);
            ProportionEstimate {
                hypothesis: h.name().to_string(),
                encompassing: h.is_encompassing(),
                proportion: p,
                n_draws: n,
                mc_se: se,
                mc_se_naive: se,
            }
        })
        .collect())
}

/// Standard error of the mean of `xs` from [`BATCHES`] contiguous batches.
/// Falls back to the iid formula when batches would hold fewer than two
/// values.
pub fn batch_means_se(xs: &[f64]) -> f64 {
    let n = xs.len();
    let b = n / BATCHES;
    if b < 2 {
        let m = xs.iter().sum::<f64>() / n as f64;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n.max(2) - 1) as f64;
        return (v / n as f64).sqrt();
    }
    let means: Vec<f64> = xs
        .chunks_exact(b)
        .take(BATCHES)
        .map(|c| c.iter().sum::<f64>() / b as f64)
        .collect();
    let k = means.len() as f64;
    let grand = means.iter().sum::<f64>() / k;
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (k - 1.0);
    (var / k).sqrt()
}

/// Proportions of stored β rows satisfying each hypothesis.
pub fn posterior_proportions(
    store: &SampleStore,
    hyps: &[ValidatedHypothesis],
) -> Result<Vec<ProportionEstimate>, SelectionError> {
    let n = store.len();
    if n == 0 {
        return Err(SelectionError::Empty);
    }
    Ok(hyps
        .iter()
        .map(|h| {
            let hits: Vec<f64> = store
                .beta_rows()
                .map(|row| if h.satisfies(row) { 1.0 } else { 0.0 })
                .collect();
            let p = hits.iter().sum::<f64>() / n as f64;
            ProportionEstimate {
                hypothesis: h.name().to_string(),
                encompassing: h.is_encompassing(),
                proportion: p,
                n_draws: n,
                mc_se: batch_means_se(&hits),
                mc_se_naive: binomial_se(p, n),
            }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SelectionRow {
    pub hypothesis: String,
    pub prior_prop: f64,
    pub post_prop: f64,
    pub bf: f64,
    pub pmp: f64,
    pub mc_se_prior: f64,
    pub mc_se_post: f64,
    pub mc_se_post_naive: f64,
    pub prior_model_prob: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SelectionReport {
    pub rows: Vec<SelectionRow>,
    pub n_prior: usize,
    pub n_post: usize,
}

/// Bayes factors against the encompassing model and posterior model
/// probabilities. Prior model probabilities default to equal and are
/// normalized when given.
pub fn compute_pmps(
    priors: &[ProportionEstimate],
    posts: &[ProportionEstimate],
    prior_model_probs: Option<&[f64]>,
) -> Result<SelectionReport, SelectionError> {
    if priors.len() != posts.len()
        || priors
            .iter()
            .zip(posts)
            .any(|(a, b)| a.hypothesis != b.hypothesis)
    {
        return Err(SelectionError::Mismatch);
    }
    if priors.is_empty() {
        return Err(SelectionError::Empty);
    }
    let k = priors.len();
    let weights: Vec<f64> = match prior_model_probs {
        None => vec![1.0 / k as f64; k],
        Some(w) => {
            if w.len() != k {
                return Err(SelectionError::PriorModelProbs(format!(
                    "{} values for {k} hypotheses",
                    w.len()
                )));
            }
            if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(SelectionError::PriorModelProbs(
                    "values must be finite and non-negative".into(),
                ));
            }
            let total: f64 = w.iter().sum();
            if !(total > 0.0) {
                return Err(SelectionError::PriorModelProbs("values sum to zero".into()));
            }
            w.iter().map(|v| v / total).collect()
        }
    };
    if !priors.iter().any(|e| e.encompassing) {
        return Err(SelectionError::NoEncompassing);
    }
    let mut bfs = Vec::with_capacity(k);
    for (pr, po) in priors.iter().zip(posts) {
        if pr.encompassing {
            bfs.push(1.0);
        } else if pr.proportion == 0.0 {
            return Err(SelectionError::Unsupported(pr.hypothesis.clone()));
        } else {
            bfs.push(po.proportion / pr.proportion);
        }
    }
    let total: f64 = bfs.iter().zip(&weights).map(|(b, w)| b * w).sum();
    if !(total > 0.0) {
        return Err(SelectionError::PriorModelProbs(
            "every hypothesis with positive support has prior probability zero".into(),
        ));
    }
    let rows = priors
        .iter()
        .zip(posts)
        .zip(bfs.iter().zip(&weights))
        .map(|((pr, po), (&bf, &w))| SelectionRow {
            hypothesis: pr.hypothesis.clone(),
            prior_prop: pr.proportion,
            post_prop: po.proportion,
            bf,
            pmp: bf * w / total,
            mc_se_prior: pr.mc_se,
            mc_se_post: po.mc_se,
            mc_se_post_naive: po.mc_se_naive,
            prior_model_prob: w,
        })
        .collect();
    Ok(SelectionReport {
        rows,
        n_prior: priors[0].n_draws,
        n_post: posts[0].n_draws,
    })
}

impl SelectionReport {
    pub fn row(&self, hypothesis: &str) -> Option<&SelectionRow> {
        self.rows.iter().find(|r| r.hypothesis == hypothesis)
    }

    pub fn pmps(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.pmp).collect()
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from(
            "hypothesis\tprior_prop\tpost_prop\tbf\tpmp\tmc_se_prior\tmc_se_post\tmc_se_post_naive\tprior_model_prob\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.hypothesis,
                r.prior_prop,
                r.post_prop,
                r.bf,
                r.pmp,
                r.mc_se_prior,
                r.mc_se_post,
                r.mc_se_post_naive,
                r.prior_model_prob
            );
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
