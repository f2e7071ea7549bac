use std::collections::HashMap;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::WorkflowError;
use crate::data::{ColumnType, ModelSpec};
use crate::distributions::SpdMatrix;
use crate::gibbs::{ChainConfig, EncompassingPrior};

/// Default number of independent prior draws for the prior proportions.
pub const DEFAULT_PRIOR_DRAWS: usize = 1_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSection,
    pub model: ModelSpec,
    #[serde(default)]
    pub prior: PriorOverrides,
    /// Hypothesis name to constraint text, in listing order.
    #[serde(default)]
    pub hypotheses: IndexMap<String, String>,
    /// Unnormalized prior model probabilities; equal when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior_model_probs: Option<IndexMap<String, f64>>,
    #[serde(default)]
    pub mcmc: McmcSection,
    #[serde(default)]
    pub fit: FitSection,
    #[serde(default)]
    pub output: OutputSection,
    /// SHA-256 of the config text, when read from text.
    #[serde(skip)]
    pub source_sha256: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// CSV file; relative paths are resolved against the config file.
    pub path: PathBuf,
    #[serde(default)]
    pub columns: HashMap<String, ColumnType>,
}

/// Replacements for individual fields of the default prior.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorOverrides {
    pub beta_mean: Option<f64>,
    pub beta_var: Option<f64>,
    pub sigma2_df: Option<f64>,
    pub sigma2_scale: Option<f64>,
    pub v_df: Option<f64>,
    pub v_scale: Option<SpdMatrix>,
}

impl PriorOverrides {
    pub fn apply(&self, mut prior: EncompassingPrior) -> EncompassingPrior {
        if let Some(m) = self.beta_mean {
            prior.beta_means.iter_mut().for_each(|x| *x = m);
        }
        if let Some(v) = self.beta_var {
            prior.beta_vars.iter_mut().for_each(|x| *x = v);
        }
        if let Some(v) = self.sigma2_df {
            prior.sigma2_df = v;
        }
        if let Some(v) = self.sigma2_scale {
            prior.sigma2_scale = v;
        }
        if let Some(v) = self.v_df {
            prior.v_df = v;
        }
        if let Some(v) = &self.v_scale {
            prior.v_scale = v.clone();
        }
        prior
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmcSection {
    pub iterations: usize,
    pub burnin: usize,
    pub thin: usize,
    pub chains: usize,
    pub seed: u64,
    pub prior_draws: usize,
    pub keep_group_effects: bool,
}

impl Default for McmcSection {
    fn default() -> Self {
        Self {
            iterations: 200_000,
            burnin: 10_000,
            thin: 1,
            chains: 1,
            seed: 1,
            prior_draws: DEFAULT_PRIOR_DRAWS,
            keep_group_effects: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    /// Hypothesis fitted by `fit` when none is named on the command line.
    pub hypothesis: Option<String>,
    /// Stored draws per chain for estimation, 20000 by default.
    pub iterations: Option<usize>,
    pub burnin: Option<usize>,
    /// Name to linear expression, e.g. `diff = "coa - ncoa"`.
    pub expressions: IndexMap<String, String>,
    /// Coefficients to report in original predictor units.
    pub back_transform: Vec<String>,
    /// Bins per parameter histogram; none written when 0.
    pub histogram_bins: usize,
}

impl Default for FitSection {
    fn default() -> Self {
        Self {
            hypothesis: None,
            iterations: Some(20_000),
            burnin: None,
            expressions: IndexMap::new(),
            back_transform: Vec::new(),
            histogram_bins: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Tsv,
    Json,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub formats: Vec<Format>,
    /// Write the stored draws as a tab-separated chain dump.
    pub chain_dump: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            formats: vec![Format::Tsv, Format::Json],
            chain_dump: true,
        }
    }
}

/// Command-line replacements for config values.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub iterations: Option<usize>,
    pub burnin: Option<usize>,
    pub chains: Option<usize>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, WorkflowError> {
        let mut cfg: RunConfig =
            toml::from_str(text).map_err(|e| WorkflowError::Config(e.to_string()))?;
        cfg.add_encompassing();
        cfg.source_sha256 = Some(super::sha256_hex(text.as_bytes()));
        Ok(cfg)
    }

    /// Read a config file; relative data and output paths become relative
    /// to the file's directory.
    pub fn load(path: &Path) -> Result<Self, WorkflowError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| WorkflowError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        if cfg.data.path.is_relative() {
            cfg.data.path = base.join(&cfg.data.path);
        }
        if cfg.output.dir.is_relative() {
            cfg.output.dir = base.join(&cfg.output.dir);
        }
        Ok(cfg)
    }

    /// Insert an unconstrained hypothesis at the front unless one is listed.
    fn add_encompassing(&mut self) {
        let unconstrained = |t: &String| {
            crate::constraints::parse_hypothesis("", t).is_ok_and(|h| h.is_encompassing())
        };
        if self.hypotheses.values().any(unconstrained) {
            return;
        }
        let name = if self.hypotheses.contains_key("H1") {
            "encompassing"
        } else {
            "H1"
        };
        self.hypotheses
            .shift_insert(0, name.to_string(), String::new());
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.mcmc.seed = s;
        }
        if let Some(i) = o.iterations {
            self.mcmc.iterations = i;
            self.fit.iterations = Some(i);
        }
        if let Some(b) = o.burnin {
            self.mcmc.burnin = b;
            self.fit.burnin = Some(b);
        }
        if let Some(c) = o.chains {
            self.mcmc.chains = c;
        }
        if let Some(d) = &o.out {
            self.output.dir = d.clone();
        }
    }

    pub fn selection_chain(&self) -> ChainConfig {
        ChainConfig {
            iterations: self.mcmc.iterations,
            burnin: self.mcmc.burnin,
            thin: self.mcmc.thin,
            chains: self.mcmc.chains,
            seed: self.mcmc.seed,
            keep_group_effects: self.mcmc.keep_group_effects,
        }
    }

    pub fn fit_chain(&self) -> ChainConfig {
        ChainConfig {
            iterations: self.fit.iterations.unwrap_or(self.mcmc.iterations),
            burnin: self.fit.burnin.unwrap_or(self.mcmc.burnin),
            ..self.selection_chain()
        }
    }

    pub fn writes(&self, f: Format) -> bool {
        self.output.formats.contains(&f)
    }
}
