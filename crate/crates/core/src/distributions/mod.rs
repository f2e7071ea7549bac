//! Random-variate generators used by the Gibbs conditionals.
//!
//! Conventions:
//!
//! * Scaled inverse-χ²(ν, s²) draws are `ν·s² / χ²(ν)`, i.e. the density is
//!   proportional to `x^-(ν/2+1) exp(-ν s² / (2x))`.
//! * Inverse-Wishart(ν, S) draws are `W⁻¹` with `W ~ Wishart(ν, S⁻¹)`, so the
//!   mean is `S / (ν - R - 1)` and `S` enters the conjugate update directly.

mod linalg;
mod rng;

pub use linalg::{cholesky, cholesky_solve, invert_lower, SpdMatrix};
pub use rng::{chain_stream, RngStream, PRIOR_STREAM};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, Exp1, Open01, StandardNormal};
use statrs::function::erf::{erfc, erfc_inv};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistributionError {
    #[error("matrix is not positive definite (leading minor {minor} is not positive)")]
    NotPositiveDefinite { minor: usize },
    #[error("matrix is not symmetric at entry ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("infeasible truncation interval: lower {lower} is not below upper {upper}")]
    InfeasibleBounds { lower: f64, upper: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Truncation points beyond this many standard deviations use the
/// exponential-proposal tail sampler instead of the inverse CDF.
const TAIL_THRESHOLD: f64 = 4.0;

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile function.
pub fn normal_quantile(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}

pub fn sample_mvnormal<R: Rng + ?Sized>(
    mean: &DVector<f64>,
    cov: &SpdMatrix,
    rng: &mut R,
) -> Result<DVector<f64>, DistributionError> {
    if mean.len() != cov.dim() {
        return Err(DistributionError::Dimension(format!(
            "mean has length {} but covariance is {}x{}",
            mean.len(),
            cov.dim(),
            cov.dim()
        )));
    }
    let z = DVector::from_fn(mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    Ok(mean + cov.cholesky_lower() * z)
}

/// One draw from `N(mean, var)` restricted to the open interval `(lower, upper)`.
/// Either bound may be infinite.
pub fn sample_truncnormal<R: Rng + ?Sized>(
    mean: f64,
    var: f64,
    lower: f64,
    upper: f64,
    rng: &mut R,
) -> Result<f64, DistributionError> {
    if !(var > 0.0) || !var.is_finite() || !mean.is_finite() {
        return Err(DistributionError::InvalidParameter(format!(
            "truncated normal needs finite mean and positive variance, got mean {mean}, var {var}"
        )));
    }
    if !(lower < upper) {
        return Err(DistributionError::InfeasibleBounds { lower, upper });
    }
    let sd = var.sqrt();
    let a = (lower - mean) / sd;
    let b = (upper - mean) / sd;
    for _ in 0..100 {
        let x = mean + sd * standard_truncnormal(a, b, rng);
        if x > lower && x < upper {
            return Ok(x);
        }
    }
    // Only reachable when the interval is a handful of ulps wide.
    let mid = 0.5 * (lower + upper);
    if mid > lower && mid < upper {
        Ok(mid)
    } else {
        Err(DistributionError::InfeasibleBounds { lower, upper })
    }
}

fn standard_truncnormal<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    if a == f64::NEG_INFINITY && b == f64::INFINITY {
        rng.sample(StandardNormal)
    } else if a > TAIL_THRESHOLD {
        upper_tail(a, b, rng)
    } else if b < -TAIL_THRESHOLD {
        -upper_tail(-b, -a, rng)
    } else if a > 0.0 {
        // Keep the interval on the left so both CDF values come from the
        // accurate side of erfc.
        -inverse_cdf_draw(-b, -a, rng)
    } else {
        inverse_cdf_draw(a, b, rng)
    }
}

fn inverse_cdf_draw<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    let pa = normal_cdf(a);
    let pb = normal_cdf(b);
    loop {
        let u: f64 = rng.sample(Open01);
        let z = normal_quantile(pa + u * (pb - pa));
        if z > a && z < b {
            return z;
        }
    }
}

/// Robert's sampler for `N(0,1)` restricted to `(a, b)` with `a > 0` far in
/// the tail: translated-exponential proposals, or uniform proposals when the
/// interval is short compared to the exponential scale.
fn upper_tail<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    let alpha = 0.5 * (a + (a * a + 4.0).sqrt());
    if b.is_finite() && alpha * (b - a) < 1.0 {
        loop {
            let u: f64 = rng.sample(Open01);
            let z = a + u * (b - a);
            let accept: f64 = rng.sample(Open01);
            if accept.ln() < 0.5 * (a * a - z * z) {
                return z;
            }
        }
    }
    loop {
        let e: f64 = rng.sample(Exp1);
        let z = a + e / alpha;
        if z >= b {
            continue;
        }
        let accept: f64 = rng.sample(Open01);
        let d = z - alpha;
        if accept.ln() < -0.5 * d * d {
            return z;
        }
    }
}

pub fn sample_scaled_inv_chisq<R: Rng + ?Sized>(
    df: f64,
    scale: f64,
    rng: &mut R,
) -> Result<f64, DistributionError> {
    if !(df > 0.0) || !(scale > 0.0) || !df.is_finite() || !scale.is_finite() {
        return Err(DistributionError::InvalidParameter(format!(
            "scaled inverse chi-squared needs positive df and scale, got df {df}, scale {scale}"
        )));
    }
    let chi = ChiSquared::new(df)
        .map_err(|e| DistributionError::InvalidParameter(e.to_string()))?
        .sample(rng);
    Ok(df * scale / chi)
}

/// Inverse-Wishart draw via the Bartlett decomposition.
///
/// With `S = C Cᵀ` and Bartlett factor `A` of a standard Wishart, the draw is
/// `(C A⁻ᵀ)(C A⁻ᵀ)ᵀ`; only triangular inverses are formed.
pub fn sample_inv_wishart<R: Rng + ?Sized>(
    df: f64,
    scale: &SpdMatrix,
    rng: &mut R,
) -> Result<SpdMatrix, DistributionError> {
    let dim = scale.dim();
    if !(df > dim as f64 - 1.0) || !df.is_finite() {
        return Err(DistributionError::InvalidParameter(format!(
            "inverse Wishart of dimension {dim} needs df > {}, got {df}",
            dim as f64 - 1.0
        )));
    }
    let mut bartlett = DMatrix::<f64>::zeros(dim, dim);
    for i in 0..dim {
        let chi = ChiSquared::new(df - i as f64)
            .map_err(|e| DistributionError::InvalidParameter(e.to_string()))?
            .sample(rng);
        bartlett[(i, i)] = chi.sqrt();
        for j in 0..i {
            bartlett[(i, j)] = rng.sample(StandardNormal);
        }
    }
    let factor = scale.cholesky_lower() * invert_lower(&bartlett).transpose();
    SpdMatrix::new(&factor * factor.transpose())
}
