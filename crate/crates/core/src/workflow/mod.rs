//! Config-driven runs: describe the data, select among hypotheses, fit one
//! hypothesis, or re-summarize a chain dump. Every command that writes
//! files also writes a JSON manifest next to them.

mod config;

use std::fmt;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::constraints::{parse_hypothesis, ConstraintError, ValidatedHypothesis};
use crate::data::{build_dataset, load_csv, Column, DataError, RawTable, TwoLevelDataset};
use crate::distributions::{RngStream, PRIOR_STREAM};
use crate::gibbs::{
    default_prior, run_chain, ChainConfig, EncompassingPrior, GibbsError, SampleStore,
};
use crate::selection::{
    compute_pmps, posterior_proportions, prior_proportions, SelectionError, SelectionReport,
};
use crate::summary::{
    back_transform, histogram, histogram_tsv, psrf_store, scalar_series, summaries_json,
    summaries_tsv, summarize, summarize_expression, DerivedExpression, ParameterSummary,
    SummaryError, PSRF_WARN,
};

pub use config::{
    DataSection, FitSection, Format, McmcSection, OutputSection, Overrides, PriorOverrides,
    RunConfig, DEFAULT_PRIOR_DRAWS,
};

#[derive(Debug, Error)]
pub enum WorkflowError {
    #[error("config: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(#[from] DataError),
    #[error("hypothesis: {0}")]
    Constraint(#[from] ConstraintError),
    #[error("sampler: {0}")]
    Gibbs(#[from] GibbsError),
    #[error("selection: {0}")]
    Selection(#[from] SelectionError),
    #[error("summary: {0}")]
    Summary(#[from] SummaryError),
    #[error("nothing to select: the config lists no constrained hypothesis")]
    NothingToSelect,
    #[error("unknown hypothesis {0}")]
    UnknownHypothesis(String),
    #[error("cannot write {path}: {message}")]
    Write { path: String, message: String },
}

impl WorkflowError {
    /// 1 for usage or config problems, 2 for data problems, 3 for numerical
    /// failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            WorkflowError::Data(DataError::Spec(_)) => 1,
            WorkflowError::Data(_) => 2,
            WorkflowError::Gibbs(GibbsError::Dump(_)) => 2,
            WorkflowError::Gibbs(GibbsError::Numerical { .. } | GibbsError::Init(_)) => 3,
            WorkflowError::Selection(SelectionError::Unsupported(_) | SelectionError::Empty) => 3,
            WorkflowError::Summary(SummaryError::Psrf(_) | SummaryError::Empty) => 3,
            _ => 1,
        }
    }
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

/// Data, design and validated hypotheses for a config.
pub struct Prepared {
    pub table: RawTable,
    pub dataset: TwoLevelDataset,
    pub prior: EncompassingPrior,
    pub hypotheses: Vec<ValidatedHypothesis>,
}

impl Prepared {
    pub fn hypothesis(&self, name: &str) -> Result<&ValidatedHypothesis, WorkflowError> {
        self.hypotheses
            .iter()
            .find(|h| h.name() == name)
            .ok_or_else(|| WorkflowError::UnknownHypothesis(name.to_string()))
    }

    pub fn encompassing(&self) -> &ValidatedHypothesis {
        self.hypotheses
            .iter()
            .find(|h| h.is_encompassing())
            .expect("config always lists an unconstrained hypothesis")
    }
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared, WorkflowError> {
    let table = load_csv(&cfg.data.path, &cfg.data.columns)?;
    let dataset = build_dataset(&table, &cfg.model)?;
    let prior = cfg.prior.apply(default_prior(&dataset));
    prior.validate(dataset.n_fixed(), dataset.n_random())?;
    let hypotheses = cfg
        .hypotheses
        .iter()
        .map(|(name, text)| {
            parse_hypothesis(name, text)
                .and_then(|h| h.validate(dataset.coef_names()))
                .map_err(WorkflowError::from)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Prepared {
        table,
        dataset,
        prior,
        hypotheses,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ColumnReport {
    pub name: String,
    pub n: usize,
    pub n_missing: usize,
    /// Present for numeric columns.
    pub mean: Option<f64>,
    pub sd: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
    /// Present for categorical columns.
    pub levels: Option<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct DescribeReport {
    pub n: usize,
    pub n_groups: usize,
    pub min_group_size: usize,
    pub max_group_size: usize,
    pub coefficients: Vec<String>,
    pub random: Vec<String>,
    pub columns: Vec<ColumnReport>,
}

impl fmt::Display for DescribeReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "N = {}", self.n)?;
        writeln!(f, "J = {}", self.n_groups)?;
        writeln!(
            f,
            "group size {}..{}",
            self.min_group_size, self.max_group_size
        )?;
        writeln!(f, "fixed: {}", self.coefficients.join(", "))?;
        writeln!(f, "random: {}", self.random.join(", "))?;
        writeln!(f, "column\tn\tmissing\tmean\tsd\tmin\tmax\tlevels")?;
        let opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
        for c in &self.columns {
            writeln!(
                f,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                c.name,
                c.n,
                c.n_missing,
                opt(c.mean),
                opt(c.sd),
                opt(c.min),
                opt(c.max),
                c.levels.map_or("-".to_string(), |l| l.to_string())
            )?;
        }
        Ok(())
    }
}

fn model_columns(cfg: &RunConfig) -> Vec<String> {
    let mut cols = vec![cfg.model.response.clone(), cfg.model.group.clone()];
    for t in cfg.model.variables.iter().chain(&cfg.model.fixed) {
        if let Some(c) = t.transform.source_column() {
            if !cols.iter().any(|x| x == c) {
                cols.push(c.to_string());
            }
        }
    }
    cols
}

pub fn cmd_describe(cfg: &RunConfig) -> Result<DescribeReport, WorkflowError> {
    let p = prepare(cfg)?;
    let sizes = p.dataset.group_sizes();
    let mut columns = Vec::new();
    for name in model_columns(cfg) {
        let col = p.table.column(&name)?;
        let report = match col {
            Column::Numeric(_) => {
                let s = p.table.summary_stats(&name)?;
                ColumnReport {
                    name,
                    n: s.n,
                    n_missing: s.n_missing,
                    mean: Some(s.mean),
                    sd: Some(s.sd),
                    min: Some(s.min),
                    max: Some(s.max),
                    levels: None,
                }
            }
            Column::Categorical(values) => {
                let mut levels: Vec<&String> = values.iter().flatten().collect();
                levels.sort();
                levels.dedup();
                let n_missing = values.iter().filter(|v| v.is_none()).count();
                ColumnReport {
                    name,
                    n: values.len() - n_missing,
                    n_missing,
                    mean: None,
                    sd: None,
                    min: None,
                    max: None,
                    levels: Some(levels.len()),
                }
            }
        };
        columns.push(report);
    }
    Ok(DescribeReport {
        n: p.dataset.n(),
        n_groups: p.dataset.n_groups(),
        min_group_size: sizes.iter().copied().min().unwrap_or(0),
        max_group_size: sizes.iter().copied().max().unwrap_or(0),
        coefficients: p.dataset.coef_names().to_vec(),
        random: p.dataset.random_names().to_vec(),
        columns,
    })
}

pub struct SelectOutcome {
    pub report: SelectionReport,
    pub store: SampleStore,
}

/// Encompassing chain, prior draws and the selection report, without
/// touching the file system.
pub fn run_select(cfg: &RunConfig, p: &Prepared) -> Result<SelectOutcome, WorkflowError> {
    if p.hypotheses.iter().all(|h| h.is_encompassing()) {
        return Err(WorkflowError::NothingToSelect);
    }
    let weights: Option<Vec<f64>> = match &cfg.prior_model_probs {
        None => None,
        Some(map) => {
            if let Some(k) = map.keys().find(|k| !cfg.hypotheses.contains_key(*k)) {
                return Err(WorkflowError::UnknownHypothesis(k.clone()));
            }
            Some(
                p.hypotheses
                    .iter()
                    .map(|h| map.get(h.name()).copied().unwrap_or(0.0))
                    .collect(),
            )
        }
    };
    let store = run_chain(
        &p.dataset,
        &p.prior,
        p.encompassing(),
        &cfg.selection_chain(),
    )?;
    let mut rng = RngStream::new(cfg.mcmc.seed, PRIOR_STREAM);
    let priors = prior_proportions(&p.prior, &p.hypotheses, cfg.mcmc.prior_draws, &mut rng)?;
    let posts = posterior_proportions(&store, &p.hypotheses)?;
    let report = compute_pmps(&priors, &posts, weights.as_deref())?;
    Ok(SelectOutcome { report, store })
}

pub struct FitOutcome {
    pub hypothesis: String,
    pub summaries: Vec<ParameterSummary>,
    pub derived: Vec<ParameterSummary>,
    pub original_units: Vec<ParameterSummary>,
    pub psrf: Option<Vec<(String, f64)>>,
    pub warnings: Vec<String>,
    pub store: SampleStore,
}

fn expressions(cfg: &RunConfig) -> Result<Vec<DerivedExpression>, WorkflowError> {
    cfg.fit
        .expressions
        .iter()
        .map(|(name, text)| DerivedExpression::parse(name, text).map_err(WorkflowError::from))
        .collect()
}

fn original_units(
    cfg: &RunConfig,
    dataset: &TwoLevelDataset,
    summaries: &[ParameterSummary],
) -> Result<Vec<ParameterSummary>, WorkflowError> {
    cfg.fit
        .back_transform
        .iter()
        .map(|name| {
            let s = summaries
                .iter()
                .find(|s| &s.name == name)
                .ok_or_else(|| SummaryError::UnknownCoefficient(name.clone()))?;
            let record = dataset
                .transform_record(name)
                .ok_or_else(|| SummaryError::UnknownCoefficient(name.clone()))?;
            Ok(back_transform(s, record)?)
        })
        .collect()
}

/// Per-parameter potential scale reduction and the warnings it raises.
type Diagnostics = (Option<Vec<(String, f64)>>, Vec<String>);

fn diagnostics(store: &SampleStore) -> Result<Diagnostics, WorkflowError> {
    if store.chain_ranges().len() < 2 {
        return Ok((None, Vec::new()));
    }
    let values = psrf_store(store)?;
    let warnings = values
        .iter()
        .filter(|(_, v)| !(*v <= PSRF_WARN))
        .map(|(n, v)| format!("potential scale reduction for {n} is {v:.3} (above {PSRF_WARN})"))
        .collect();
    Ok((Some(values), warnings))
}

pub fn run_fit(cfg: &RunConfig, p: &Prepared, name: &str) -> Result<FitOutcome, WorkflowError> {
    let h = p.hypothesis(name)?;
    let exprs = expressions(cfg)?;
    let store = run_chain(&p.dataset, &p.prior, h, &cfg.fit_chain())?;
    let summaries = summarize(&store)?;
    let derived = exprs
        .iter()
        .map(|e| summarize_expression(&store, e))
        .collect::<Result<Vec<_>, _>>()?;
    let original_units = original_units(cfg, &p.dataset, &summaries)?;
    let (psrf, warnings) = diagnostics(&store)?;
    Ok(FitOutcome {
        hypothesis: name.to_string(),
        summaries,
        derived,
        original_units,
        psrf,
        warnings,
        store,
    })
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    hypothesis: Option<&'a str>,
    config_sha256: Option<&'a str>,
    seed: Option<u64>,
    chains: Option<usize>,
    iterations: Option<usize>,
    burnin: Option<usize>,
    thin: Option<usize>,
    version: &'a str,
    wall_time_seconds: f64,
    files: &'a [String],
}

/// Collects output files in one directory.
struct Writer {
    dir: PathBuf,
    files: Vec<String>,
}

impl Writer {
    fn new(dir: &Path) -> Result<Self, WorkflowError> {
        fs::create_dir_all(dir).map_err(|e| WorkflowError::Write {
            path: dir.display().to_string(),
            message: e.to_string(),
        })?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, contents: &[u8]) -> Result<(), WorkflowError> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| WorkflowError::Write {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn chain_dump(&mut self, name: &str, store: &SampleStore) -> Result<(), WorkflowError> {
        let mut buf = Vec::new();
        store
            .write_tsv(&mut buf)
            .map_err(|e| WorkflowError::Write {
                path: name.to_string(),
                message: e.to_string(),
            })?;
        self.write(name, &buf)
    }

    fn summaries(
        &mut self,
        formats: &[Format],
        stem: &str,
        rows: &[ParameterSummary],
    ) -> Result<(), WorkflowError> {
        if rows.is_empty() {
            return Ok(());
        }
        if formats.contains(&Format::Tsv) {
            self.write(&format!("{stem}.tsv"), summaries_tsv(rows).as_bytes())?;
        }
        if formats.contains(&Format::Json) {
            self.write(&format!("{stem}.json"), summaries_json(rows).as_bytes())?;
        }
        Ok(())
    }

    fn manifest(
        mut self,
        command: &str,
        hypothesis: Option<&str>,
        config_sha256: Option<&str>,
        chain: Option<&ChainConfig>,
        started: Instant,
    ) -> Result<Vec<String>, WorkflowError> {
        let name = match hypothesis {
            Some(h) => format!("manifest_{command}_{}.json", file_safe(h)),
            None => format!("manifest_{command}.json"),
        };
        let files = self.files.clone();
        let m = Manifest {
            command,
            hypothesis,
            config_sha256,
            seed: chain.map(|c| c.seed),
            chains: chain.map(|c| c.chains),
            iterations: chain.map(|c| c.iterations),
            burnin: chain.map(|c| c.burnin),
            thin: chain.map(|c| c.thin),
            version: env!("CARGO_PKG_VERSION"),
            wall_time_seconds: started.elapsed().as_secs_f64(),
            files: &files,
        };
        let text = serde_json::to_string_pretty(&m).expect("manifest serializes");
        self.write(&name, text.as_bytes())?;
        Ok(self.files)
    }
}

fn file_safe(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn psrf_tsv(values: &[(String, f64)]) -> String {
    let mut out = String::from("name\tpsrf\n");
    for (n, v) in values {
        let _ = writeln!(out, "{n}\t{v}");
    }
    out
}

fn group_effects_tsv(store: &SampleStore) -> Option<String> {
    let g = store.group_effects()?;
    let mut out = String::from("group");
    for r in 0..g.means.ncols() {
        let _ = write!(out, "\tu{}", r + 1);
    }
    out.push('\n');
    for (j, label) in g.labels.iter().enumerate() {
        out.push_str(label);
        for r in 0..g.means.ncols() {
            let _ = write!(out, "\t{}", g.means[(j, r)]);
        }
        out.push('\n');
    }
    Some(out)
}

/// Run selection and write the report, the encompassing chain dump and a
/// manifest to the output directory.
pub fn cmd_select(cfg: &RunConfig) -> Result<(SelectOutcome, Vec<String>), WorkflowError> {
    let started = Instant::now();
    let p = prepare(cfg)?;
    let out = run_select(cfg, &p)?;
    let mut w = Writer::new(&cfg.output.dir)?;
    if cfg.writes(Format::Tsv) {
        w.write("selection.tsv", out.report.to_tsv().as_bytes())?;
    }
    if cfg.writes(Format::Json) {
        w.write("selection.json", out.report.to_json().as_bytes())?;
    }
    let enc = file_safe(p.encompassing().name());
    if cfg.output.chain_dump {
        w.chain_dump(&format!("chain_{enc}.tsv"), &out.store)?;
    }
    if let Some(text) = group_effects_tsv(&out.store) {
        w.write(&format!("group_effects_{enc}.tsv"), text.as_bytes())?;
    }
    let files = w.manifest(
        "select",
        None,
        cfg.source_sha256.as_deref(),
        Some(&cfg.selection_chain()),
        started,
    )?;
    Ok((out, files))
}

/// Fit one hypothesis (the config's `fit.hypothesis` when `name` is
/// `None`) and write its summaries.
pub fn cmd_fit(
    cfg: &RunConfig,
    name: Option<&str>,
) -> Result<(FitOutcome, Vec<String>), WorkflowError> {
    let started = Instant::now();
    let p = prepare(cfg)?;
    let name = match name.or(cfg.fit.hypothesis.as_deref()) {
        Some(n) => n.to_string(),
        None => {
            return Err(WorkflowError::Config(
                "no hypothesis to fit: pass one or set fit.hypothesis".into(),
            ))
        }
    };
    let out = run_fit(cfg, &p, &name)?;
    let tag = file_safe(&name);
    let mut w = Writer::new(&cfg.output.dir)?;
    let tables = FitTables {
        summaries: &out.summaries,
        derived: &out.derived,
        original: &out.original_units,
        psrf: out.psrf.as_deref(),
    };
    tables.write(
        &mut w,
        &cfg.output.formats,
        cfg.fit.histogram_bins,
        &tag,
        &out.store,
    )?;
    if cfg.output.chain_dump {
        w.chain_dump(&format!("chain_{tag}.tsv"), &out.store)?;
    }
    if let Some(text) = group_effects_tsv(&out.store) {
        w.write(&format!("group_effects_{tag}.tsv"), text.as_bytes())?;
    }
    let files = w.manifest(
        "fit",
        Some(&name),
        cfg.source_sha256.as_deref(),
        Some(&cfg.fit_chain()),
        started,
    )?;
    Ok((out, files))
}

struct FitTables<'a> {
    summaries: &'a [ParameterSummary],
    derived: &'a [ParameterSummary],
    original: &'a [ParameterSummary],
    psrf: Option<&'a [(String, f64)]>,
}

impl FitTables<'_> {
    fn write(
        &self,
        w: &mut Writer,
        formats: &[Format],
        histogram_bins: usize,
        tag: &str,
        store: &SampleStore,
    ) -> Result<(), WorkflowError> {
        w.summaries(formats, &format!("summary_{tag}"), self.summaries)?;
        w.summaries(formats, &format!("derived_{tag}"), self.derived)?;
        w.summaries(formats, &format!("original_units_{tag}"), self.original)?;
        if let Some(values) = self.psrf {
            w.write(&format!("psrf_{tag}.tsv"), psrf_tsv(values).as_bytes())?;
        }
        if histogram_bins > 0 {
            for (name, xs) in scalar_series(store) {
                let bins = histogram(&xs, histogram_bins)?;
                w.write(
                    &format!("hist_{tag}_{}.tsv", file_safe(&name)),
                    histogram_tsv(&bins).as_bytes(),
                )?;
            }
        }
        Ok(())
    }
}

pub struct SummarizeOutcome {
    pub summaries: Vec<ParameterSummary>,
    pub derived: Vec<ParameterSummary>,
    pub original_units: Vec<ParameterSummary>,
    pub psrf: Option<Vec<(String, f64)>>,
    pub warnings: Vec<String>,
}

/// Summarize an existing chain dump into `out`. With a config, its
/// expressions, back-transformations (which read the data for the scaling
/// constants), formats and histogram settings apply.
pub fn cmd_summarize(
    dump: &Path,
    cfg: Option<&RunConfig>,
    out: &Path,
) -> Result<(SummarizeOutcome, Vec<String>), WorkflowError> {
    let started = Instant::now();
    let file = fs::File::open(dump)
        .map_err(|e| GibbsError::Dump(format!("cannot open {}: {e}", dump.display())))?;
    let store = SampleStore::read_tsv(file)?;
    let summaries = summarize(&store)?;
    let mut derived = Vec::new();
    let mut original = Vec::new();
    if let Some(cfg) = cfg {
        for e in expressions(cfg)? {
            derived.push(summarize_expression(&store, &e)?);
        }
        if !cfg.fit.back_transform.is_empty() {
            let p = prepare(cfg)?;
            original = original_units(cfg, &p.dataset, &summaries)?;
        }
    }
    let lengths: Vec<usize> = store.chain_ranges().iter().map(|r| r.len()).collect();
    let (psrf, warnings) = if lengths.windows(2).all(|w| w[0] == w[1]) {
        diagnostics(&store)?
    } else {
        (
            None,
            vec!["chains differ in length; potential scale reduction skipped".into()],
        )
    };
    let stem = dump
        .file_stem()
        .map(|s| file_safe(&s.to_string_lossy()))
        .unwrap_or_else(|| "dump".into());
    let default_formats = OutputSection::default().formats;
    let formats = cfg.map_or(&default_formats, |c| &c.output.formats);
    let bins = cfg.map_or(0, |c| c.fit.histogram_bins);
    let mut w = Writer::new(out)?;
    let tables = FitTables {
        summaries: &summaries,
        derived: &derived,
        original: &original,
        psrf: psrf.as_deref(),
    };
    tables.write(&mut w, formats, bins, &stem, &store)?;
    let files = w.manifest(
        "summarize",
        None,
        cfg.and_then(|c| c.source_sha256.as_deref()),
        None,
        started,
    )?;
    Ok((
        SummarizeOutcome {
            summaries,
            derived,
            original_units: original,
            psrf,
            warnings,
        },
        files,
    ))
}
