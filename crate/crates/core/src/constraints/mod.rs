//! Inequality hypotheses on the fixed effects.
//!
//! A hypothesis is a conjunction of strict constraints between coefficients
//! or between a coefficient and a constant. The empty conjunction is the
//! encompassing model. Exact ties never satisfy a constraint.

mod parser;

use std::collections::VecDeque;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

pub use parser::parse_hypothesis;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConstraintError {
    #[error("syntax error at column {col}: {message}")]
    Syntax { col: usize, message: String },
    #[error("column {col}: only strict inequalities supported ('<' or '>')")]
    NonStrict { col: usize },
    #[error("hypothesis {hypothesis}: unknown coefficient {name}")]
    UnknownCoefficient { hypothesis: String, name: String },
    #[error("hypothesis {hypothesis}: cyclic ordering among {members}")]
    Cyclic { hypothesis: String, members: String },
    #[error("hypothesis {hypothesis}: contradictory constants, {coef} must lie above {lower} and below {upper}")]
    Contradictory {
        hypothesis: String,
        coef: String,
        lower: f64,
        upper: f64,
    },
    #[error("hypothesis {hypothesis}: coefficient {coef} has no feasible values, bounds ({lower}, {upper})")]
    Infeasible {
        hypothesis: String,
        coef: String,
        lower: f64,
        upper: f64,
    },
    #[error("hypothesis {hypothesis}: expected {expected} coefficients, got {got}")]
    Length {
        hypothesis: String,
        expected: usize,
        got: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Term {
    Coef(String),
    Const(f64),
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Coef(name) => f.write_str(name),
            Term::Const(v) => write!(f, "{v}"),
        }
    }
}

/// `greater > lesser`; a parsed `<` is stored with its sides swapped.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Constraint {
    greater: Term,
    lesser: Term,
}

impl Constraint {
    pub fn new(greater: Term, lesser: Term) -> Result<Self, ConstraintError> {
        match (&greater, &lesser) {
            (Term::Const(_), Term::Const(_)) => Err(ConstraintError::Syntax {
                col: 0,
                message: "a constraint must involve at least one coefficient".into(),
            }),
            (Term::Coef(a), Term::Coef(b)) if a == b => Err(ConstraintError::Syntax {
                col: 0,
                message: format!("coefficient {a} is compared with itself"),
            }),
            _ => Ok(Self { greater, lesser }),
        }
    }

    pub fn greater(&self) -> &Term {
        &self.greater
    }

    pub fn lesser(&self) -> &Term {
        &self.lesser
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} > {}", self.greater, self.lesser)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Hypothesis {
    pub name: String,
    pub constraints: Vec<Constraint>,
    /// Coefficients listed without a relation; documentation only.
    pub mentions: Vec<String>,
}

impl Hypothesis {
    pub fn encompassing(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            constraints: Vec::new(),
            mentions: Vec::new(),
        }
    }

    pub fn is_encompassing(&self) -> bool {
        self.constraints.is_empty()
    }

    /// Resolve coefficient names against `coef_names` and reject hypotheses
    /// whose constraint region is empty.
    pub fn validate(&self, coef_names: &[String]) -> Result<ValidatedHypothesis, ConstraintError> {
        ValidatedHypothesis::new(self.clone(), coef_names)
    }
}

impl fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .constraints
            .iter()
            .map(ToString::to_string)
            .chain(self.mentions.iter().cloned())
            .collect();
        f.write_str(&parts.join(", "))
    }
}

/// A hypothesis resolved to coefficient indices.
#[derive(Clone, Debug)]
pub struct ValidatedHypothesis {
    source: Hypothesis,
    n_coef: usize,
    /// `(g, l)` means `β_g > β_l`.
    pairs: Vec<(usize, usize)>,
    /// Constant bounds per coefficient: `lo[p] < β_p < hi[p]`.
    lo: Vec<f64>,
    hi: Vec<f64>,
    /// Coefficients constrained to lie above / below each coefficient.
    above: Vec<Vec<usize>>,
    below: Vec<Vec<usize>>,
    /// Indices ordered so every coefficient follows those it must exceed.
    order: Vec<usize>,
    /// Bounds implied by constants propagated through the ordering.
    reach_lo: Vec<f64>,
    reach_hi: Vec<f64>,
}

impl ValidatedHypothesis {
    fn new(source: Hypothesis, coef_names: &[String]) -> Result<Self, ConstraintError> {
        let n = coef_names.len();
        let name = source.name.clone();
        let resolve = |coef: &str| {
            coef_names.iter().position(|c| c == coef).ok_or_else(|| {
                ConstraintError::UnknownCoefficient {
                    hypothesis: name.clone(),
                    name: coef.to_string(),
                }
            })
        };
        for m in &source.mentions {
            resolve(m)?;
        }

        let mut pairs = Vec::new();
        let mut lo = vec![f64::NEG_INFINITY; n];
        let mut hi = vec![f64::INFINITY; n];
        for c in &source.constraints {
            match (&c.greater, &c.lesser) {
                (Term::Coef(g), Term::Coef(l)) => {
                    let pair = (resolve(g)?, resolve(l)?);
                    if !pairs.contains(&pair) {
                        pairs.push(pair);
                    }
                }
                (Term::Coef(g), Term::Const(v)) => {
                    let p = resolve(g)?;
                    lo[p] = lo[p].max(*v);
                }
                (Term::Const(v), Term::Coef(l)) => {
                    let p = resolve(l)?;
                    hi[p] = hi[p].min(*v);
                }
                (Term::Const(_), Term::Const(_)) => unreachable!("rejected by Constraint::new"),
            }
        }
        for p in 0..n {
            if lo[p] >= hi[p] {
                return Err(ConstraintError::Contradictory {
                    hypothesis: name,
                    coef: coef_names[p].clone(),
                    lower: lo[p],
                    upper: hi[p],
                });
            }
        }

        let mut above = vec![Vec::new(); n];
        let mut below = vec![Vec::new(); n];
        for &(g, l) in &pairs {
            above[l].push(g);
            below[g].push(l);
        }

        // Kahn's algorithm, smallest coefficients first
        let mut pending: Vec<usize> = below.iter().map(Vec::len).collect();
        let mut queue: VecDeque<usize> = (0..n).filter(|&p| pending[p] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(p) = queue.pop_front() {
            order.push(p);
            for &g in &above[p] {
                pending[g] -= 1;
                if pending[g] == 0 {
                    queue.push_back(g);
                }
            }
        }
        if order.len() < n {
            let members: Vec<&str> = (0..n)
                .filter(|&p| pending[p] > 0)
                .map(|p| coef_names[p].as_str())
                .collect();
            return Err(ConstraintError::Cyclic {
                hypothesis: name,
                members: members.join(", "),
            });
        }

        let mut reach_lo = lo.clone();
        for &p in &order {
            for &l in &below[p] {
                reach_lo[p] = reach_lo[p].max(reach_lo[l]);
            }
        }
        let mut reach_hi = hi.clone();
        for &p in order.iter().rev() {
            for &g in &above[p] {
                reach_hi[p] = reach_hi[p].min(reach_hi[g]);
            }
        }
        for p in 0..n {
            if reach_lo[p] >= reach_hi[p] {
                return Err(ConstraintError::Contradictory {
                    hypothesis: name,
                    coef: coef_names[p].clone(),
                    lower: reach_lo[p],
                    upper: reach_hi[p],
                });
            }
        }

        Ok(Self {
            source,
            n_coef: n,
            pairs,
            lo,
            hi,
            above,
            below,
            order,
            reach_lo,
            reach_hi,
        })
    }

    pub fn name(&self) -> &str {
        &self.source.name
    }

    pub fn hypothesis(&self) -> &Hypothesis {
        &self.source
    }

    pub fn is_encompassing(&self) -> bool {
        self.source.is_encompassing()
    }

    pub fn n_coef(&self) -> usize {
        self.n_coef
    }

    /// Whether coefficient `p` appears in any constraint.
    pub fn constrains(&self, p: usize) -> bool {
        self.lo[p] > f64::NEG_INFINITY
            || self.hi[p] < f64::INFINITY
            || !self.above[p].is_empty()
            || !self.below[p].is_empty()
    }

    /// True iff every constraint holds strictly.
    pub fn satisfies(&self, beta: &[f64]) -> bool {
        debug_assert!(beta.len() >= self.n_coef);
        self.pairs.iter().all(|&(g, l)| beta[g] > beta[l])
            && (0..self.n_coef).all(|p| beta[p] > self.lo[p] && beta[p] < self.hi[p])
    }

    /// Open interval for `β_p` given the other coefficients in `beta`.
    pub fn bounds_for(&self, p: usize, beta: &[f64]) -> (f64, f64) {
        let lower = self.below[p]
            .iter()
            .map(|&q| beta[q])
            .fold(self.lo[p], f64::max);
        let upper = self.above[p]
            .iter()
            .map(|&q| beta[q])
            .fold(self.hi[p], f64::min);
        (lower, upper)
    }

    /// Move `beta` into the constraint region, changing only coefficients
    /// that violate their bounds. Coefficients are visited from the bottom of
    /// the ordering up; each violator is placed just above what it must
    /// exceed (spacing 1e-3, halved when the room is tighter).
    pub fn repair(&self, beta: &mut [f64]) -> Result<(), ConstraintError> {
        if beta.len() < self.n_coef {
            return Err(ConstraintError::Length {
                hypothesis: self.source.name.clone(),
                expected: self.n_coef,
                got: beta.len(),
            });
        }
        for &p in &self.order {
            let required = self.below[p]
                .iter()
                .map(|&q| beta[q])
                .fold(self.lo[p], f64::max);
            let cap = self.reach_hi[p];
            if beta[p] > required && beta[p] < cap {
                continue;
            }
            let gap = |x: f64| 1e-3 * x.abs().max(1.0);
            beta[p] = match (required.is_finite(), cap.is_finite()) {
                (true, true) => required + gap(required).min(0.5 * (cap - required)),
                (true, false) => required + gap(required),
                (false, true) => cap - gap(cap),
                (false, false) => 0.0,
            };
        }
        if self.satisfies(beta) {
            Ok(())
        } else {
            let p = (0..self.n_coef)
                .find(|&p| {
                    let (l, u) = self.bounds_for(p, beta);
                    !(beta[p] > l && beta[p] < u)
                })
                .unwrap_or(0);
            Err(ConstraintError::Infeasible {
                hypothesis: self.source.name.clone(),
                coef: format!("#{}", p + 1),
                lower: self.reach_lo[p],
                upper: self.reach_hi[p],
            })
        }
    }
}

#[cfg(test)]
mod tests;
