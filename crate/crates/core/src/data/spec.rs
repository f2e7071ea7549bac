use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::DataError;

/// Names that would collide with columns of the chain dump.
pub(crate) const RESERVED_NAMES: [&str; 3] = ["chain", "iter", "sigma2"];

/// Level of a factor; numbers compare numerically against numeric columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Level {
    Number(f64),
    Text(String),
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Level::Number(v) => write!(f, "{v}"),
            Level::Text(s) => f.write_str(s),
        }
    }
}

/// How a model column is derived from the raw table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Transform {
    /// Constant 1.
    Intercept,
    Identity {
        column: String,
    },
    Center {
        column: String,
    },
    /// Deviation from the mean of the row's group.
    GroupCenter {
        column: String,
    },
    /// `(x - c) / (2 sd(x))`; `c` defaults to the column mean.
    Scale2sd {
        column: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<f64>,
    },
    /// 1 where the column equals `level`, else 0.
    Indicator {
        column: String,
        level: Level,
    },
    /// Product of two previously declared variables or terms, each already
    /// transformed.
    Interaction {
        left: String,
        right: String,
    },
}

impl Transform {
    pub fn source_column(&self) -> Option<&str> {
        match self {
            Transform::Identity { column }
            | Transform::Center { column }
            | Transform::GroupCenter { column }
            | Transform::Scale2sd { column, .. }
            | Transform::Indicator { column, .. } => Some(column),
            Transform::Intercept | Transform::Interaction { .. } => None,
        }
    }
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Transform::Intercept => f.write_str("intercept"),
            Transform::Identity { column } => write!(f, "identity({column})"),
            Transform::Center { column } => write!(f, "center({column})"),
            Transform::GroupCenter { column } => write!(f, "group_center({column})"),
            Transform::Scale2sd {
                column,
                center: None,
            } => write!(f, "scale2sd({column})"),
            Transform::Scale2sd {
                column,
                center: Some(c),
            } => write!(f, "scale2sd({column}, center={c})"),
            Transform::Indicator { column, level } => write!(f, "indicator({column}={level})"),
            Transform::Interaction { left, right } => write!(f, "interaction({left}, {right})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedTransform {
    pub name: String,
    pub transform: Transform,
}

impl NamedTransform {
    pub fn new(name: impl Into<String>, transform: Transform) -> Self {
        Self {
            name: name.into(),
            transform,
        }
    }
}

/// A random-effect column: the constant `"1"` or a declared variable / fixed term.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomTerm {
    pub name: String,
    pub source: String,
}

impl RandomTerm {
    pub const INTERCEPT: &'static str = "1";

    pub fn new(name: impl Into<String>, source: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            source: source.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub response: String,
    pub group: String,
    /// Helper columns that feed interactions or random terms without
    /// entering the fixed part themselves.
    #[serde(default)]
    pub variables: Vec<NamedTransform>,
    pub fixed: Vec<NamedTransform>,
    pub random: Vec<RandomTerm>,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.fixed.is_empty() {
            return Err(DataError::Spec(
                "at least one fixed term is required".into(),
            ));
        }
        if self.random.is_empty() {
            return Err(DataError::Spec(
                "at least one random term is required".into(),
            ));
        }
        let mut declared = HashSet::new();
        for t in self.variables.iter().chain(&self.fixed) {
            check_name(&t.name)?;
            if !declared.insert(t.name.as_str()) {
                return Err(DataError::Spec(format!("duplicate term name '{}'", t.name)));
            }
        }
        let mut random = HashSet::new();
        for r in &self.random {
            check_name(&r.name)?;
            if !random.insert(r.name.as_str()) {
                return Err(DataError::Spec(format!(
                    "duplicate random term name '{}'",
                    r.name
                )));
            }
            if r.source != RandomTerm::INTERCEPT && !declared.contains(r.source.as_str()) {
                return Err(DataError::Spec(format!(
                    "random term '{}' references '{}', which is neither \"1\" nor a declared variable or fixed term",
                    r.name, r.source
                )));
            }
        }
        Ok(())
    }

    pub fn fixed_names(&self) -> Vec<String> {
        self.fixed.iter().map(|t| t.name.clone()).collect()
    }
}

fn check_name(name: &str) -> Result<(), DataError> {
    let valid = name
        .chars()
        .next()
        .is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.');
    if !valid {
        return Err(DataError::Spec(format!(
            "invalid term name '{name}': use letters, digits, '_' or '.', starting with a letter or '_'"
        )));
    }
    if RESERVED_NAMES.contains(&name) {
        return Err(DataError::Spec(format!("term name '{name}' is reserved")));
    }
    Ok(())
}
