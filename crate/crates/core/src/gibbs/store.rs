//! Stored draws and the tab-separated chain dump.
//!
//! Dump layout: a header row, then one row per stored iteration.
//!
//! ```text
//! chain  iter  <coef_1> ... <coef_P>  sigma2  V[1,1]  V[1,2] ... V[R,R]
//! ```
//!
//! `chain` is 0-based, `iter` is the 1-based sweep number including burn-in.
//! Only the upper triangle of `V` is written, row by row. Values use the
//! shortest representation that reads back to the same `f64`.

use std::io::{BufRead, BufReader, Read, Write};
use std::ops::Range;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{ChainConfig, EncompassingPrior, GibbsError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainMeta {
    pub chain: usize,
    pub seed: u64,
    pub stream: u64,
    pub draws: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoreMeta {
    pub hypothesis: String,
    pub coef_names: Vec<String>,
    pub random_names: Vec<String>,
    pub config: ChainConfig,
    pub prior: EncompassingPrior,
    pub chains: Vec<ChainMeta>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroupEffectMeans {
    pub labels: Vec<String>,
    /// Row per group, column per random term.
    pub means: DMatrix<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleStore {
    coef_names: Vec<String>,
    n_random: usize,
    beta: Vec<f64>,
    sigma2: Vec<f64>,
    v: Vec<f64>,
    chain: Vec<usize>,
    iter: Vec<usize>,
    meta: Option<StoreMeta>,
    group_effects: Option<GroupEffectMeans>,
}

fn v_len(r: usize) -> usize {
    r * (r + 1) / 2
}

/// 0-based `(a, b)` with `a <= b` for each stored `V` entry.
pub fn v_entries(r: usize) -> Vec<(usize, usize)> {
    (0..r).flat_map(|a| (a..r).map(move |b| (a, b))).collect()
}

impl SampleStore {
    pub(super) fn empty(meta: StoreMeta) -> Self {
        Self {
            coef_names: meta.coef_names.clone(),
            n_random: meta.random_names.len(),
            beta: Vec::new(),
            sigma2: Vec::new(),
            v: Vec::new(),
            chain: Vec::new(),
            iter: Vec::new(),
            meta: Some(meta),
            group_effects: None,
        }
    }

    pub(super) fn append_chain(
        &mut self,
        chain_meta: ChainMeta,
        beta: Vec<f64>,
        sigma2: Vec<f64>,
        v: Vec<f64>,
        iters: Vec<usize>,
    ) {
        let n = sigma2.len();
        debug_assert_eq!(beta.len(), n * self.coef_names.len());
        debug_assert_eq!(v.len(), n * v_len(self.n_random));
        self.chain.extend(std::iter::repeat_n(chain_meta.chain, n));
        self.beta.extend(beta);
        self.sigma2.extend(sigma2);
        self.v.extend(v);
        self.iter.extend(iters);
        if let Some(m) = self.meta.as_mut() {
            m.chains.push(chain_meta);
        }
    }

    pub(super) fn set_group_effect_means(&mut self, means: DMatrix<f64>, labels: Vec<String>) {
        self.group_effects = Some(GroupEffectMeans { labels, means });
    }

    /// Build a store directly from draws; rows of `beta` and `v` are
    /// flattened row-major.
    pub fn from_draws(
        coef_names: Vec<String>,
        n_random: usize,
        beta: Vec<f64>,
        sigma2: Vec<f64>,
        v: Vec<f64>,
        chain: Vec<usize>,
    ) -> Result<Self, GibbsError> {
        let n = sigma2.len();
        if beta.len() != n * coef_names.len() || v.len() != n * v_len(n_random) || chain.len() != n
        {
            return Err(GibbsError::Dump(format!(
                "inconsistent draw counts: {} sigma2, {} beta values for {} coefficients, {} V values, {} chain ids",
                n,
                beta.len(),
                coef_names.len(),
                v.len(),
                chain.len()
            )));
        }
        if chain.windows(2).any(|w| w[1] < w[0]) {
            return Err(GibbsError::Dump(
                "rows must be grouped by chain in increasing order".into(),
            ));
        }
        Ok(Self {
            coef_names,
            n_random,
            beta,
            sigma2,
            v,
            iter: (1..=n).collect(),
            chain,
            meta: None,
            group_effects: None,
        })
    }

    pub fn len(&self) -> usize {
        self.sigma2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma2.is_empty()
    }

    pub fn n_coef(&self) -> usize {
        self.coef_names.len()
    }

    pub fn n_random(&self) -> usize {
        self.n_random
    }

    pub fn coef_names(&self) -> &[String] {
        &self.coef_names
    }

    pub fn meta(&self) -> Option<&StoreMeta> {
        self.meta.as_ref()
    }

    pub fn group_effects(&self) -> Option<&GroupEffectMeans> {
        self.group_effects.as_ref()
    }

    pub fn beta_row(&self, i: usize) -> &[f64] {
        let p = self.n_coef();
        &self.beta[i * p..(i + 1) * p]
    }

    pub fn beta_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.beta.chunks_exact(self.n_coef().max(1))
    }

    pub fn beta_column(&self, p: usize) -> Vec<f64> {
        self.beta_rows().map(|row| row[p]).collect()
    }

    pub fn sigma2(&self) -> &[f64] {
        &self.sigma2
    }

    /// Draws of `V[a, b]` (0-based, either order).
    pub fn v_column(&self, a: usize, b: usize) -> Vec<f64> {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        let k = v_entries(self.n_random)
            .iter()
            .position(|&e| e == (a, b))
            .expect("V index out of range");
        let nv = v_len(self.n_random);
        self.v.iter().skip(k).step_by(nv).copied().collect()
    }

    pub fn v_draw(&self, i: usize) -> DMatrix<f64> {
        let r = self.n_random;
        let nv = v_len(r);
        let row = &self.v[i * nv..(i + 1) * nv];
        let mut m = DMatrix::zeros(r, r);
        for (k, (a, b)) in v_entries(r).into_iter().enumerate() {
            m[(a, b)] = row[k];
            m[(b, a)] = row[k];
        }
        m
    }

    pub fn chain_ids(&self) -> &[usize] {
        &self.chain
    }

    pub fn iterations(&self) -> &[usize] {
        &self.iter
    }

    /// Row ranges of each chain, in chain order.
    pub fn chain_ranges(&self) -> Vec<Range<usize>> {
        let mut out = Vec::new();
        let mut start = 0;
        for i in 1..=self.len() {
            if i == self.len() || self.chain[i] != self.chain[start] {
                out.push(start..i);
                start = i;
            }
        }
        out
    }

    pub fn dump_header(&self) -> Vec<String> {
        let mut cols = vec!["chain".to_string(), "iter".to_string()];
        cols.extend(self.coef_names.iter().cloned());
        cols.push("sigma2".into());
        for (a, b) in v_entries(self.n_random) {
            cols.push(format!("V[{},{}]", a + 1, b + 1));
        }
        cols
    }

    pub fn write_tsv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", self.dump_header().join("\t"))?;
        let nv = v_len(self.n_random);
        let mut line = String::new();
        for i in 0..self.len() {
            use std::fmt::Write as _;
            line.clear();
            let _ = write!(line, "{}\t{}", self.chain[i], self.iter[i]);
            for b in self.beta_row(i) {
                let _ = write!(line, "\t{b}");
            }
            let _ = write!(line, "\t{}", self.sigma2[i]);
            for v in &self.v[i * nv..(i + 1) * nv] {
                let _ = write!(line, "\t{v}");
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn read_tsv<R: Read>(reader: R) -> Result<Self, GibbsError> {
        let bad = |m: String| GibbsError::Dump(m);
        let mut lines = BufReader::new(reader).lines();
        let header = lines
            .next()
            .ok_or_else(|| bad("empty file".into()))?
            .map_err(|e| bad(e.to_string()))?;
        let cols: Vec<&str> = header.split('\t').collect();
        if cols.len() < 4 || cols[0] != "chain" || cols[1] != "iter" {
            return Err(bad("header must start with chain, iter".into()));
        }
        let sigma_at = cols
            .iter()
            .position(|c| *c == "sigma2")
            .ok_or_else(|| bad("header lacks a sigma2 column".into()))?;
        let coef_names: Vec<String> = cols[2..sigma_at].iter().map(|s| s.to_string()).collect();
        let nv = cols.len() - sigma_at - 1;
        let r = (0..=nv)
            .find(|&r| v_len(r) == nv)
            .ok_or_else(|| bad(format!("{nv} V columns do not form an upper triangle")))?;
        for (k, (a, b)) in v_entries(r).into_iter().enumerate() {
            let expected = format!("V[{},{}]", a + 1, b + 1);
            if cols[sigma_at + 1 + k] != expected {
                return Err(bad(format!(
                    "expected column {expected}, found {}",
                    cols[sigma_at + 1 + k]
                )));
            }
        }

        let p = coef_names.len();
        let (mut beta, mut sigma2, mut v, mut chain, mut iter) =
            (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (i, line) in lines.enumerate() {
            let line = line.map_err(|e| bad(e.to_string()))?;
            if line.is_empty() {
                continue;
            }
            let row = i + 2;
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != cols.len() {
                return Err(bad(format!(
                    "line {row}: expected {} fields, found {}",
                    cols.len(),
                    fields.len()
                )));
            }
            let int = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| bad(format!("line {row}: '{s}' is not a non-negative integer")))
            };
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| bad(format!("line {row}: '{s}' is not a number")))
            };
            chain.push(int(fields[0])?);
            iter.push(int(fields[1])?);
            for f in &fields[2..2 + p] {
                beta.push(num(f)?);
            }
            sigma2.push(num(fields[sigma_at])?);
            for f in &fields[sigma_at + 1..] {
                v.push(num(f)?);
            }
        }
        if sigma2.is_empty() {
            return Err(bad("no draws".into()));
        }
        let mut store = Self::from_draws(coef_names, r, beta, sigma2, v, chain)?;
        store.iter = iter;
        Ok(store)
    }
}
