use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::spec::{Level, ModelSpec, RandomTerm, Transform};
use super::table::{mean_sd, Column, RawTable};
use super::DataError;

/// Constants used to build one declared column, kept for back-transformation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TransformRecord {
    pub name: String,
    pub transform: Transform,
    /// Constant subtracted from the source column, if any.
    pub center: Option<f64>,
    /// Sample sd of the source column, for `scale2sd`.
    pub sd: Option<f64>,
    /// One original unit of the predictor equals `1 / divisor` model units;
    /// a coefficient on the original scale is the model coefficient divided
    /// by this.
    pub divisor: f64,
}

impl TransformRecord {
    /// Whether a coefficient on this column is a slope that can be re-expressed
    /// in original units.
    pub fn is_slope(&self) -> bool {
        !matches!(
            self.transform,
            Transform::Indicator { .. } | Transform::Intercept
        )
    }
}

/// Response, designs and grouping of a two-level model.
///
/// Rows keep their input order; `group[k]` is the 0-based index of row `k`'s
/// group, assigned by first appearance.
#[derive(Clone, Debug)]
pub struct TwoLevelDataset {
    y: DVector<f64>,
    x: DMatrix<f64>,
    z: DMatrix<f64>,
    group: Vec<usize>,
    group_labels: Vec<String>,
    members: Vec<Vec<usize>>,
    coef_names: Vec<String>,
    random_names: Vec<String>,
    transform_log: Vec<TransformRecord>,
}

impl TwoLevelDataset {
    pub fn new(
        y: DVector<f64>,
        x: DMatrix<f64>,
        z: DMatrix<f64>,
        group: Vec<usize>,
        coef_names: Vec<String>,
        random_names: Vec<String>,
    ) -> Result<Self, DataError> {
        let n_groups = group.iter().max().map_or(0, |g| g + 1);
        let labels = (1..=n_groups).map(|j| j.to_string()).collect();
        Self::assemble(y, x, z, group, labels, coef_names, random_names, Vec::new())
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        y: DVector<f64>,
        x: DMatrix<f64>,
        z: DMatrix<f64>,
        group: Vec<usize>,
        group_labels: Vec<String>,
        coef_names: Vec<String>,
        random_names: Vec<String>,
        transform_log: Vec<TransformRecord>,
    ) -> Result<Self, DataError> {
        let n = y.len();
        if n == 0 {
            return Err(DataError::Table("no data rows".into()));
        }
        if x.nrows() != n || z.nrows() != n || group.len() != n {
            return Err(DataError::Spec(format!(
                "row counts disagree: y {n}, X {}, Z {}, group {}",
                x.nrows(),
                z.nrows(),
                group.len()
            )));
        }
        if x.ncols() == 0 || z.ncols() == 0 {
            return Err(DataError::Spec(
                "need at least one fixed and one random column".into(),
            ));
        }
        if coef_names.len() != x.ncols() || random_names.len() != z.ncols() {
            return Err(DataError::Spec(
                "column names do not match design widths".into(),
            ));
        }
        let n_groups = group_labels.len();
        if n_groups < 2 {
            return Err(DataError::Spec(format!(
                "at least 2 groups are required, found {n_groups}"
            )));
        }
        let mut members = vec![Vec::new(); n_groups];
        for (row, &g) in group.iter().enumerate() {
            if g >= n_groups {
                return Err(DataError::Spec(format!(
                    "row {} has group index {g} out of range",
                    row + 1
                )));
            }
            members[g].push(row);
        }
        if let Some(j) = members.iter().position(Vec::is_empty) {
            return Err(DataError::Spec(format!("group {} has no rows", j + 1)));
        }
        let finite = |m: &DMatrix<f64>| m.iter().all(|v| v.is_finite());
        if !y.iter().all(|v| v.is_finite()) || !finite(&x) || !finite(&z) {
            return Err(DataError::Spec(
                "non-finite value in response or design".into(),
            ));
        }
        Ok(Self {
            y,
            x,
            z,
            group,
            group_labels,
            members,
            coef_names,
            random_names,
            transform_log,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn n_groups(&self) -> usize {
        self.members.len()
    }

    pub fn n_fixed(&self) -> usize {
        self.x.ncols()
    }

    pub fn n_random(&self) -> usize {
        self.z.ncols()
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn group(&self) -> &[usize] {
        &self.group
    }

    pub fn group_labels(&self) -> &[String] {
        &self.group_labels
    }

    /// Row indices of each group.
    pub fn members(&self) -> &[Vec<usize>] {
        &self.members
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        self.members.iter().map(Vec::len).collect()
    }

    pub fn coef_names(&self) -> &[String] {
        &self.coef_names
    }

    pub fn random_names(&self) -> &[String] {
        &self.random_names
    }

    pub fn coef_index(&self, name: &str) -> Option<usize> {
        self.coef_names.iter().position(|n| n == name)
    }

    pub fn transform_log(&self) -> &[TransformRecord] {
        &self.transform_log
    }

    pub fn transform_record(&self, name: &str) -> Option<&TransformRecord> {
        self.transform_log.iter().find(|r| r.name == name)
    }

    /// Mean and sample variance (divisor N-1) of the response.
    pub fn response_moments(&self) -> (f64, f64) {
        let (m, sd) = mean_sd(self.y.as_slice());
        (m, sd * sd)
    }
}

struct Built {
    values: Vec<f64>,
    record: TransformRecord,
}

pub fn build_dataset(table: &RawTable, spec: &ModelSpec) -> Result<TwoLevelDataset, DataError> {
    spec.validate()?;
    let nrows = table.nrows();

    let y = table.numeric(&spec.response)?.to_vec();
    check_complete(table, &spec.response)?;
    let group_col = table.column(&spec.group)?;
    check_complete(table, &spec.group)?;

    let mut index: HashMap<String, usize> = HashMap::new();
    let mut labels = Vec::new();
    let mut group = Vec::with_capacity(nrows);
    for row in 0..nrows {
        let label = group_col.label(row).expect("checked complete");
        let next = labels.len();
        let g = *index.entry(label.clone()).or_insert_with(|| {
            labels.push(label);
            next
        });
        group.push(g);
    }
    if labels.len() < 2 {
        return Err(DataError::Spec(format!(
            "group column '{}' has {} distinct value(s); at least 2 are required",
            spec.group,
            labels.len()
        )));
    }

    let mut built: HashMap<String, Built> = HashMap::new();
    let mut log = Vec::new();
    for term in spec.variables.iter().chain(&spec.fixed) {
        let b = apply(
            table,
            &term.name,
            &term.transform,
            &group,
            labels.len(),
            &built,
        )?;
        log.push(b.record.clone());
        built.insert(term.name.clone(), b);
    }

    let x = DMatrix::from_fn(nrows, spec.fixed.len(), |r, c| {
        built[&spec.fixed[c].name].values[r]
    });
    let mut z = DMatrix::zeros(nrows, spec.random.len());
    for (c, term) in spec.random.iter().enumerate() {
        if term.source == RandomTerm::INTERCEPT {
            z.column_mut(c).fill(1.0);
        } else {
            let src = &built[&term.source].values;
            z.column_mut(c).copy_from_slice(src);
        }
    }

    TwoLevelDataset::assemble(
        DVector::from_vec(y),
        x,
        z,
        group,
        labels,
        spec.fixed_names(),
        spec.random.iter().map(|r| r.name.clone()).collect(),
        log,
    )
}

fn check_complete(table: &RawTable, name: &str) -> Result<(), DataError> {
    let col = table.column(name)?;
    match (0..col.len()).find(|&r| col.is_missing(r)) {
        Some(r) => Err(DataError::Missing {
            row: r + 1,
            column: name.to_string(),
        }),
        None => Ok(()),
    }
}

fn apply(
    table: &RawTable,
    name: &str,
    transform: &Transform,
    group: &[usize],
    n_groups: usize,
    built: &HashMap<String, Built>,
) -> Result<Built, DataError> {
    if let Some(column) = transform.source_column() {
        check_complete(table, column)?;
    }
    let record = |center, sd, divisor| TransformRecord {
        name: name.to_string(),
        transform: transform.clone(),
        center,
        sd,
        divisor,
    };
    let out = match transform {
        Transform::Intercept => Built {
            values: vec![1.0; table.nrows()],
            record: record(None, None, 1.0),
        },
        Transform::Identity { column } => Built {
            values: table.numeric(column)?.to_vec(),
            record: record(None, None, 1.0),
        },
        Transform::Center { column } => {
            let xs = table.numeric(column)?;
            let (mean, sd) = mean_sd(xs);
            Built {
                values: xs.iter().map(|x| x - mean).collect(),
                record: record(Some(mean), Some(sd), 1.0),
            }
        }
        Transform::GroupCenter { column } => {
            let xs = table.numeric(column)?;
            let mut sums = vec![0.0; n_groups];
            let mut counts = vec![0usize; n_groups];
            for (x, &g) in xs.iter().zip(group) {
                sums[g] += x;
                counts[g] += 1;
            }
            Built {
                values: xs
                    .iter()
                    .zip(group)
                    .map(|(x, &g)| x - sums[g] / counts[g] as f64)
                    .collect(),
                record: record(None, None, 1.0),
            }
        }
        Transform::Scale2sd { column, center } => {
            let xs = table.numeric(column)?;
            let (mean, sd) = mean_sd(xs);
            if !(sd > 0.0) {
                return Err(DataError::ZeroVariance(column.clone()));
            }
            let c = center.unwrap_or(mean);
            Built {
                values: xs.iter().map(|x| (x - c) / (2.0 * sd)).collect(),
                record: record(Some(c), Some(sd), 2.0 * sd),
            }
        }
        Transform::Indicator { column, level } => {
            let col = table.column(column)?;
            let values: Vec<f64> = (0..table.nrows())
                .map(|r| f64::from(u8::from(matches_level(col, r, level))))
                .collect();
            if !values.contains(&1.0) {
                return Err(DataError::AbsentLevel {
                    column: column.clone(),
                    level: level.to_string(),
                });
            }
            Built {
                values,
                record: record(None, None, 1.0),
            }
        }
        Transform::Interaction { left, right } => {
            let lookup = |operand: &str| {
                built
                    .get(operand)
                    .ok_or_else(|| DataError::UndeclaredOperand {
                        term: name.to_string(),
                        operand: operand.to_string(),
                    })
            };
            let (l, r) = (lookup(left)?, lookup(right)?);
            Built {
                values: l.values.iter().zip(&r.values).map(|(a, b)| a * b).collect(),
                record: record(None, None, l.record.divisor * r.record.divisor),
            }
        }
    };
    Ok(out)
}

fn matches_level(col: &Column, row: usize, level: &Level) -> bool {
    match (col, level) {
        (Column::Numeric(v), Level::Number(l)) => v[row] == *l,
        (Column::Numeric(v), Level::Text(s)) => s.parse::<f64>().is_ok_and(|l| v[row] == l),
        (Column::Categorical(v), level) => v[row].as_deref() == Some(level.to_string().as_str()),
    }
}
