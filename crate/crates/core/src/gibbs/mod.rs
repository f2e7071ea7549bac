//! Gibbs sampler for the two-level model, unconstrained or restricted to an
//! inequality hypothesis on the fixed effects.
//!
//! One sweep updates, in order, the group effects `u_j`, the residual
//! variance `σ²`, the random-effect covariance `V` and then each `β_p` in
//! declaration order.

mod store;

use std::thread;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::{ConstraintError, ValidatedHypothesis};
use crate::data::TwoLevelDataset;
use crate::distributions::{
    chain_stream, sample_inv_wishart, sample_mvnormal, sample_scaled_inv_chisq, sample_truncnormal,
    DistributionError, RngStream, SpdMatrix,
};

pub use store::{v_entries, ChainMeta, GroupEffectMeans, SampleStore, StoreMeta};

/// Prior variance given to every fixed effect by [`default_prior`].
pub const DEFAULT_BETA_VAR: f64 = 1e4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GibbsError {
    #[error("invalid sampler configuration: {0}")]
    Config(String),
    #[error("invalid prior: {0}")]
    Prior(String),
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
    #[error("chain {chain}, iteration {iteration}, {step} step: {source}")]
    Numerical {
        chain: usize,
        iteration: usize,
        step: &'static str,
        source: DistributionError,
    },
    #[error("initial values: {0}")]
    Init(String),
    #[error("chain dump: {0}")]
    Dump(String),
}

/// Error of a single update, before the chain and iteration are known.
#[derive(Debug, Clone, PartialEq)]
pub struct StepError {
    pub step: &'static str,
    pub source: DistributionError,
}

impl StepError {
    fn at(self, chain: usize, iteration: usize) -> GibbsError {
        GibbsError::Numerical {
            chain,
            iteration,
            step: self.step,
            source: self.source,
        }
    }
}

fn step_err(step: &'static str) -> impl Fn(DistributionError) -> StepError {
    move |source| StepError { step, source }
}

/// Independent normal priors on β, scaled inverse-χ² on σ², inverse
/// Wishart on V.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncompassingPrior {
    pub beta_means: Vec<f64>,
    pub beta_vars: Vec<f64>,
    pub sigma2_df: f64,
    pub sigma2_scale: f64,
    pub v_df: f64,
    pub v_scale: SpdMatrix,
}

impl EncompassingPrior {
    pub fn validate(&self, n_fixed: usize, n_random: usize) -> Result<(), GibbsError> {
        let bad = |m: String| Err(GibbsError::Prior(m));
        if self.beta_means.len() != n_fixed || self.beta_vars.len() != n_fixed {
            return bad(format!(
                "expected {n_fixed} coefficient means and variances, got {} and {}",
                self.beta_means.len(),
                self.beta_vars.len()
            ));
        }
        if let Some(m) = self.beta_means.iter().find(|m| !m.is_finite()) {
            return bad(format!("coefficient mean {m} is not finite"));
        }
        if let Some(v) = self
            .beta_vars
            .iter()
            .find(|v| !(**v > 0.0 && v.is_finite()))
        {
            return bad(format!(
                "coefficient variance {v} must be positive and finite"
            ));
        }
        if !(self.sigma2_df > 0.0 && self.sigma2_df.is_finite()) {
            return bad(format!("sigma2 df {} must be positive", self.sigma2_df));
        }
        if !(self.sigma2_scale > 0.0 && self.sigma2_scale.is_finite()) {
            return bad(format!(
                "sigma2 scale {} must be positive",
                self.sigma2_scale
            ));
        }
        if self.v_scale.dim() != n_random {
            return bad(format!(
                "V scale is {}x{} but the model has {n_random} random terms",
                self.v_scale.dim(),
                self.v_scale.dim()
            ));
        }
        if !(self.v_df > n_random as f64 - 1.0 && self.v_df.is_finite()) {
            return bad(format!(
                "V df {} must exceed {}",
                self.v_df,
                n_random as f64 - 1.0
            ));
        }
        Ok(())
    }
}

/// Exchangeable default: every `β_p ~ N(mean(y), 1e4)`, `σ²` with one
/// degree of freedom and scale `var(y)`, `V ~ IW(R + 1, I)`.
pub fn default_prior(data: &TwoLevelDataset) -> EncompassingPrior {
    let (mean, var) = data.response_moments();
    let p = data.n_fixed();
    let r = data.n_random();
    EncompassingPrior {
        beta_means: vec![mean; p],
        beta_vars: vec![DEFAULT_BETA_VAR; p],
        sigma2_df: 1.0,
        sigma2_scale: var,
        v_df: r as f64 + 1.0,
        v_scale: SpdMatrix::identity(r),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    /// Stored draws per chain.
    pub iterations: usize,
    pub burnin: usize,
    pub thin: usize,
    pub chains: usize,
    pub seed: u64,
    /// Accumulate posterior means of the group effects.
    #[serde(default)]
    pub keep_group_effects: bool,
}

impl ChainConfig {
    pub fn new(iterations: usize, burnin: usize, seed: u64) -> Self {
        Self {
            iterations,
            burnin,
            thin: 1,
            chains: 1,
            seed,
            keep_group_effects: false,
        }
    }

    pub fn validate(&self) -> Result<(), GibbsError> {
        if self.iterations == 0 {
            return Err(GibbsError::Config("iterations must be at least 1".into()));
        }
        if self.thin == 0 {
            return Err(GibbsError::Config("thin must be at least 1".into()));
        }
        if self.chains == 0 {
            return Err(GibbsError::Config("chains must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParameterState {
    pub beta: DVector<f64>,
    /// Row `j` holds `u_j`.
    pub u: DMatrix<f64>,
    pub v: SpdMatrix,
    pub sigma2: f64,
}

/// Starting values: least squares for β (ignoring the grouping, with a tiny
/// ridge for safety), moved into the hypothesis region; `u = 0`, `V = I`,
/// `σ² = var(y)`.
pub fn init_state(
    data: &TwoLevelDataset,
    h: &ValidatedHypothesis,
) -> Result<ParameterState, GibbsError> {
    let x = data.x();
    let mut xtx = x.transpose() * x;
    let ridge = 1e-10 * xtx.diagonal().max().max(1.0);
    for p in 0..xtx.nrows() {
        xtx[(p, p)] += ridge;
    }
    let xty = x.transpose() * data.y();
    let mut beta = xtx
        .cholesky()
        .map(|c| c.solve(&xty))
        .ok_or_else(|| GibbsError::Init("design matrix is numerically singular".into()))?;
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(GibbsError::Init("least-squares start is not finite".into()));
    }
    h.repair(beta.as_mut_slice())?;
    let (_, var) = data.response_moments();
    Ok(ParameterState {
        beta,
        u: DMatrix::zeros(data.n_groups(), data.n_random()),
        v: SpdMatrix::identity(data.n_random()),
        sigma2: var,
    })
}

/// Data-dependent quantities reused by every sweep.
pub struct Sampler<'a> {
    data: &'a TwoLevelDataset,
    prior: &'a EncompassingPrior,
    hypothesis: &'a ValidatedHypothesis,
    xtx: DMatrix<f64>,
    ztz: Vec<DMatrix<f64>>,
    work: DVector<f64>,
}

impl<'a> Sampler<'a> {
    pub fn new(
        data: &'a TwoLevelDataset,
        prior: &'a EncompassingPrior,
        hypothesis: &'a ValidatedHypothesis,
    ) -> Result<Self, GibbsError> {
        prior.validate(data.n_fixed(), data.n_random())?;
        if hypothesis.n_coef() != data.n_fixed() {
            return Err(GibbsError::Config(format!(
                "hypothesis {} was validated against {} coefficients, model has {}",
                hypothesis.name(),
                hypothesis.n_coef(),
                data.n_fixed()
            )));
        }
        let x = data.x();
        let z = data.z();
        let ztz = data
            .members()
            .iter()
            .map(|rows| {
                let zj = z.select_rows(rows);
                zj.transpose() * zj
            })
            .collect();
        Ok(Self {
            data,
            prior,
            hypothesis,
            xtx: x.transpose() * x,
            ztz,
            work: DVector::zeros(data.n()),
        })
    }

    /// `y - Xβ` into the work buffer.
    fn fixed_residual(&mut self, beta: &DVector<f64>) {
        self.work.copy_from(self.data.y());
        self.work.gemv(-1.0, self.data.x(), beta, 1.0);
    }

    /// Add `sign · z_k u_{g(k)}` to the work buffer.
    fn add_group_part(&mut self, u: &DMatrix<f64>, sign: f64) {
        let z = self.data.z();
        for (k, &g) in self.data.group().iter().enumerate() {
            let mut s = 0.0;
            for r in 0..z.ncols() {
                s += z[(k, r)] * u[(g, r)];
            }
            self.work[k] += sign * s;
        }
    }

    /// Mean `Φ_j` and covariance `Σ_j` of each `u_j` given everything else.
    pub fn u_conditionals(
        &mut self,
        state: &ParameterState,
    ) -> Result<Vec<(DVector<f64>, SpdMatrix)>, StepError> {
        let err = step_err("u");
        self.fixed_residual(&state.beta);
        let v_inv = state.v.inverse();
        let z = self.data.z();
        let nr = z.ncols();
        let mut out = Vec::with_capacity(self.data.n_groups());
        for (j, rows) in self.data.members().iter().enumerate() {
            let mut zr = DVector::zeros(nr);
            for &k in rows {
                for r in 0..nr {
                    zr[r] += z[(k, r)] * self.work[k];
                }
            }
            let precision = &self.ztz[j] / state.sigma2 + &v_inv;
            let sigma_j =
                SpdMatrix::new(SpdMatrix::new(precision).map_err(&err)?.inverse()).map_err(&err)?;
            let phi = sigma_j.matrix() * zr / state.sigma2;
            out.push((phi, sigma_j));
        }
        Ok(out)
    }

    pub fn step_u<R: Rng + ?Sized>(
        &mut self,
        state: &mut ParameterState,
        rng: &mut R,
    ) -> Result<(), StepError> {
        for (j, (phi, sigma_j)) in self.u_conditionals(state)?.into_iter().enumerate() {
            let draw = sample_mvnormal(&phi, &sigma_j, rng).map_err(step_err("u"))?;
            state.u.row_mut(j).copy_from(&draw.transpose());
        }
        Ok(())
    }

    pub fn step_sigma2<R: Rng + ?Sized>(
        &mut self,
        state: &mut ParameterState,
        rng: &mut R,
    ) -> Result<(), StepError> {
        self.fixed_residual(&state.beta);
        self.add_group_part(&state.u, -1.0);
        let rss = self.work.norm_squared();
        let df = self.prior.sigma2_df + self.data.n() as f64;
        let total = self.prior.sigma2_df * self.prior.sigma2_scale + rss;
        state.sigma2 = sample_scaled_inv_chisq(df, total / df, rng).map_err(step_err("sigma2"))?;
        Ok(())
    }

    pub fn step_v<R: Rng + ?Sized>(
        &mut self,
        state: &mut ParameterState,
        rng: &mut R,
    ) -> Result<(), StepError> {
        let err = step_err("V");
        let scale = state.u.transpose() * &state.u + self.prior.v_scale.matrix();
        let scale = SpdMatrix::new(scale).map_err(&err)?;
        let df = self.prior.v_df + self.data.n_groups() as f64;
        state.v = sample_inv_wishart(df, &scale, rng).map_err(&err)?;
        Ok(())
    }

    pub fn step_beta<R: Rng + ?Sized>(
        &mut self,
        state: &mut ParameterState,
        rng: &mut R,
    ) -> Result<(), StepError> {
        // Σ_k x_pk (y_k - z_k u) without the other coefficients; their
        // contribution comes from XᵀX
        self.work.copy_from(self.data.y());
        self.add_group_part(&state.u, -1.0);
        let xw = self.data.x().tr_mul(&self.work);
        let beta = &mut state.beta;
        for p in 0..beta.len() {
            let mut s = xw[p];
            for q in 0..beta.len() {
                if q != p {
                    s -= self.xtx[(p, q)] * beta[q];
                }
            }
            let prior_prec = 1.0 / self.prior.beta_vars[p];
            let precision = prior_prec + self.xtx[(p, p)] / state.sigma2;
            let mean = (self.prior.beta_means[p] * prior_prec + s / state.sigma2) / precision;
            let var = 1.0 / precision;
            beta[p] = if self.hypothesis.constrains(p) {
                let (lower, upper) = self.hypothesis.bounds_for(p, beta.as_slice());
                sample_truncnormal(mean, var, lower, upper, rng).map_err(step_err("beta"))?
            } else {
                mean + var.sqrt() * rng.sample::<f64, _>(StandardNormal)
            };
        }
        Ok(())
    }

    /// One full sweep `u → σ² → V → β`.
    pub fn sweep<R: Rng + ?Sized>(
        &mut self,
        state: &mut ParameterState,
        rng: &mut R,
    ) -> Result<(), StepError> {
        self.step_u(state, rng)?;
        self.step_sigma2(state, rng)?;
        self.step_v(state, rng)?;
        self.step_beta(state, rng)
    }
}

/// Output of one chain before merging.
struct ChainRun {
    beta: Vec<f64>,
    sigma2: Vec<f64>,
    v: Vec<f64>,
    iters: Vec<usize>,
    u_mean: Option<DMatrix<f64>>,
}

fn run_single(
    data: &TwoLevelDataset,
    prior: &EncompassingPrior,
    h: &ValidatedHypothesis,
    config: &ChainConfig,
    chain: usize,
) -> Result<ChainRun, GibbsError> {
    let mut sampler = Sampler::new(data, prior, h)?;
    let mut state = init_state(data, h)?;
    let mut rng = RngStream::new(config.seed, chain_stream(chain));
    let p = data.n_fixed();
    let r = data.n_random();
    let nv = r * (r + 1) / 2;
    let n = config.iterations;
    let mut out = ChainRun {
        beta: Vec::with_capacity(n * p),
        sigma2: Vec::with_capacity(n),
        v: Vec::with_capacity(n * nv),
        iters: Vec::with_capacity(n),
        u_mean: config
            .keep_group_effects
            .then(|| DMatrix::zeros(data.n_groups(), r)),
    };
    let total = config.burnin + n * config.thin;
    for it in 1..=total {
        sampler
            .sweep(&mut state, &mut rng)
            .map_err(|e| e.at(chain, it))?;
        if it <= config.burnin || !(it - config.burnin).is_multiple_of(config.thin) {
            continue;
        }
        debug_assert!(h.satisfies(state.beta.as_slice()));
        out.beta.extend(state.beta.iter());
        out.sigma2.push(state.sigma2);
        let vm = state.v.matrix();
        for a in 0..r {
            for b in a..r {
                out.v.push(vm[(a, b)]);
            }
        }
        out.iters.push(it);
        if let Some(acc) = out.u_mean.as_mut() {
            *acc += &state.u;
        }
    }
    if let Some(acc) = out.u_mean.as_mut() {
        *acc /= n as f64;
    }
    Ok(out)
}

/// Run `config.chains` chains in parallel and merge them in chain order.
/// Chain `c` draws from stream `c + 1` of `config.seed`.
pub fn run_chain(
    data: &TwoLevelDataset,
    prior: &EncompassingPrior,
    h: &ValidatedHypothesis,
    config: &ChainConfig,
) -> Result<SampleStore, GibbsError> {
    config.validate()?;
    prior.validate(data.n_fixed(), data.n_random())?;
    let runs: Vec<Result<ChainRun, GibbsError>> = if config.chains == 1 {
        vec![run_single(data, prior, h, config, 0)]
    } else {
        thread::scope(|s| {
            let handles: Vec<_> = (0..config.chains)
                .map(|c| s.spawn(move || run_single(data, prior, h, config, c)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("chain thread panicked"))
                .collect()
        })
    };
    let mut store = SampleStore::empty(StoreMeta {
        hypothesis: h.name().to_string(),
        coef_names: data.coef_names().to_vec(),
        random_names: data.random_names().to_vec(),
        config: config.clone(),
        prior: prior.clone(),
        chains: Vec::new(),
    });
    let mut group_means = Vec::new();
    for (c, run) in runs.into_iter().enumerate() {
        let run = run?;
        store.append_chain(
            ChainMeta {
                chain: c,
                seed: config.seed,
                stream: chain_stream(c),
                draws: run.sigma2.len(),
            },
            run.beta,
            run.sigma2,
            run.v,
            run.iters,
        );
        if let Some(m) = run.u_mean {
            group_means.push(m);
        }
    }
    if !group_means.is_empty() {
        let k = group_means.len() as f64;
        let mut mean = DMatrix::zeros(data.n_groups(), data.n_random());
        for m in &group_means {
            mean += m;
        }
        store.set_group_effect_means(mean / k, data.group_labels().to_vec());
    }
    Ok(store)
}

/// Fill `row` with one independent draw of β from its prior.
pub fn draw_prior_beta<R: Rng + ?Sized>(prior: &EncompassingPrior, rng: &mut R, row: &mut [f64]) {
    for (p, slot) in row.iter_mut().enumerate() {
        let z: f64 = rng.sample(StandardNormal);
        *slot = prior.beta_means[p] + prior.beta_vars[p].sqrt() * z;
    }
}

/// `n × P` matrix of independent prior draws of β, row by row.
pub fn sample_prior_beta<R: Rng + ?Sized>(
    prior: &EncompassingPrior,
    n: usize,
    rng: &mut R,
) -> DMatrix<f64> {
    let p = prior.beta_means.len();
    let mut row = vec![0.0; p];
    let mut out = DMatrix::zeros(n, p);
    for i in 0..n {
        draw_prior_beta(prior, rng, &mut row);
        for (q, v) in row.iter().enumerate() {
            out[(i, q)] = *v;
        }
    }
    out
}
