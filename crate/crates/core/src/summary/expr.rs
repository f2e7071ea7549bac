//! Linear combinations of coefficients, written like `b1 - b2` or
//! `0.5*b1 + 0.5*b2 - 1`.

use std::fmt;

use serde::Serialize;

use super::SummaryError;
use crate::gibbs::SampleStore;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DerivedExpression {
    pub name: String,
    /// `(coefficient, weight)` in the order written; repeats are kept.
    pub terms: Vec<(String, f64)>,
    pub constant: f64,
}

impl DerivedExpression {
    pub fn new(
        name: impl Into<String>,
        terms: Vec<(String, f64)>,
        constant: f64,
    ) -> Result<Self, SummaryError> {
        let name = name.into();
        let bad = |message: &str| SummaryError::Expression {
            name: name.clone(),
            message: message.into(),
        };
        if !terms.iter().any(|(_, w)| *w != 0.0) {
            return Err(bad("needs at least one coefficient with a nonzero weight"));
        }
        if terms.iter().any(|(_, w)| !w.is_finite()) || !constant.is_finite() {
            return Err(bad("weights must be finite"));
        }
        Ok(Self {
            name,
            terms,
            constant,
        })
    }

    pub fn parse(name: &str, text: &str) -> Result<Self, SummaryError> {
        let err = |message: String| SummaryError::Expression {
            name: name.to_string(),
            message,
        };
        let chars: Vec<char> = text.chars().collect();
        let skip = |mut i: usize| {
            while i < chars.len() && chars[i].is_whitespace() {
                i += 1;
            }
            i
        };
        if skip(0) == chars.len() {
            return Err(err("empty expression".into()));
        }
        let mut terms = Vec::new();
        let mut constant = 0.0;
        let mut i = skip(0);
        let mut first = true;
        while i < chars.len() {
            let mut sign = 1.0;
            match chars[i] {
                '+' => i += 1,
                '-' => {
                    sign = -1.0;
                    i += 1;
                }
                _ if first => {}
                c => return Err(err(format!("expected '+' or '-', found '{c}'"))),
            }
            first = false;
            i = skip(i);
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            let number = if i > start {
                let s: String = chars[start..i].iter().collect();
                Some(
                    s.parse::<f64>()
                        .map_err(|_| err(format!("malformed number '{s}'")))?,
                )
            } else {
                None
            };
            i = skip(i);
            let has_star = i < chars.len() && chars[i] == '*';
            if has_star {
                if number.is_none() {
                    return Err(err("'*' must follow a number".into()));
                }
                i = skip(i + 1);
            }
            let id_start = i;
            if i < chars.len() && (chars[i].is_ascii_alphabetic() || chars[i] == '_') {
                while i < chars.len()
                    && (chars[i].is_ascii_alphanumeric() || chars[i] == '_' || chars[i] == '.')
                {
                    i += 1;
                }
            }
            let ident: String = chars[id_start..i].iter().collect();
            i = skip(i);
            match (number, ident.is_empty()) {
                (Some(v), true) if !has_star => constant += sign * v,
                (w, false) => terms.push((ident, sign * w.unwrap_or(1.0))),
                _ => return Err(err("expected a coefficient or number".into())),
            }
        }
        Self::new(name, terms, constant)
    }

    /// Value of the expression at every stored draw.
    pub fn evaluate(&self, store: &SampleStore) -> Result<Vec<f64>, SummaryError> {
        let idx: Vec<(usize, f64)> = self
            .terms
            .iter()
            .map(|(n, w)| {
                store
                    .coef_names()
                    .iter()
                    .position(|c| c == n)
                    .map(|p| (p, *w))
                    .ok_or_else(|| SummaryError::UnknownCoefficient(n.clone()))
            })
            .collect::<Result<_, _>>()?;
        Ok(store
            .beta_rows()
            .map(|row| {
                idx.iter()
                    .fold(self.constant, |acc, &(p, w)| acc + w * row[p])
            })
            .collect())
    }
}

impl fmt::Display for DerivedExpression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, (n, w)) in self.terms.iter().enumerate() {
            let (sign, mag) = if *w < 0.0 { ("-", -w) } else { ("+", *w) };
            match (k, sign) {
                (0, "+") => {}
                (0, _) => f.write_str("-")?,
                _ => write!(f, " {sign} ")?,
            }
            if mag == 1.0 {
                f.write_str(n)?;
            } else {
                write!(f, "{mag}*{n}")?;
            }
        }
        if self.constant != 0.0 {
            let sign = if self.constant < 0.0 { "-" } else { "+" };
            write!(f, " {sign} {}", self.constant.abs())?;
        }
        Ok(())
    }
}
