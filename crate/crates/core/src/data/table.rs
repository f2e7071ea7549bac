use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DataError;

/// Cell spellings read as missing values.
const MISSING_TOKENS: [&str; 4] = ["", "NA", "NaN", "nan"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnType {
    Numeric,
    Categorical,
}

/// A loaded column. Missing numeric cells are NaN, missing categorical cells `None`.
#[derive(Clone, Debug, PartialEq)]
pub enum Column {
    Numeric(Vec<f64>),
    Categorical(Vec<Option<String>>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_missing(&self, row: usize) -> bool {
        match self {
            Column::Numeric(v) => v[row].is_nan(),
            Column::Categorical(v) => v[row].is_none(),
        }
    }

    /// Cell rendered as a label; numeric values use their shortest round-trip form.
    pub fn label(&self, row: usize) -> Option<String> {
        match self {
            Column::Numeric(v) if v[row].is_nan() => None,
            Column::Numeric(v) => Some(format!("{}", v[row])),
            Column::Categorical(v) => v[row].clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RawTable {
    names: Vec<String>,
    columns: Vec<Column>,
    nrows: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SummaryStats {
    pub n: usize,
    pub n_missing: usize,
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
}

impl RawTable {
    pub fn new(names: Vec<String>, columns: Vec<Column>) -> Result<Self, DataError> {
        if names.len() != columns.len() {
            return Err(DataError::Table(format!(
                "{} column names for {} columns",
                names.len(),
                columns.len()
            )));
        }
        if columns.is_empty() {
            return Err(DataError::Table("table has no columns".into()));
        }
        let nrows = columns[0].len();
        if nrows == 0 {
            return Err(DataError::Table("no data rows".into()));
        }
        let mut seen = HashMap::new();
        for (i, (name, col)) in names.iter().zip(&columns).enumerate() {
            if name.trim().is_empty() {
                return Err(DataError::Table(format!(
                    "column {} has an empty name",
                    i + 1
                )));
            }
            if seen.insert(name.as_str(), i).is_some() {
                return Err(DataError::Table(format!("duplicate column name '{name}'")));
            }
            if col.len() != nrows {
                return Err(DataError::Table(format!(
                    "column '{name}' has {} rows, expected {nrows}",
                    col.len()
                )));
            }
        }
        Ok(Self {
            names,
            columns,
            nrows,
        })
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, name: &str) -> Result<&Column, DataError> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.columns[i])
            .ok_or_else(|| DataError::UnknownColumn(name.to_string()))
    }

    pub fn numeric(&self, name: &str) -> Result<&[f64], DataError> {
        match self.column(name)? {
            Column::Numeric(v) => Ok(v),
            Column::Categorical(_) => Err(DataError::NotNumeric(name.to_string())),
        }
    }

    pub fn summary_stats(&self, name: &str) -> Result<SummaryStats, DataError> {
        let values = self.numeric(name)?;
        let present: Vec<f64> = values.iter().copied().filter(|v| !v.is_nan()).collect();
        if present.is_empty() {
            return Err(DataError::Table(format!("column '{name}' has no values")));
        }
        let (mean, sd) = mean_sd(&present);
        let min = present.iter().copied().fold(f64::INFINITY, f64::min);
        let max = present.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(SummaryStats {
            n: present.len(),
            n_missing: values.len() - present.len(),
            mean,
            sd,
            min,
            max,
        })
    }
}

/// Sample mean and standard deviation (divisor n-1; 0 for a single value).
pub(crate) fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let ss = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>();
    (mean, (ss / (n - 1.0)).sqrt())
}

pub fn load_csv(
    path: impl AsRef<Path>,
    schema: &HashMap<String, ColumnType>,
) -> Result<RawTable, DataError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| DataError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    read_csv(file, schema)
}

/// Parse delimited text with a header row. Columns without a hint are
/// numeric when every present cell parses as a float, categorical otherwise.
pub fn read_csv<R: Read>(
    reader: R,
    schema: &HashMap<String, ColumnType>,
) -> Result<RawTable, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(csv_error)?
        .iter()
        .map(str::to_string)
        .collect();
    for hinted in schema.keys() {
        if !headers.contains(hinted) {
            return Err(DataError::UnknownColumn(hinted.clone()));
        }
    }
    let mut cells: Vec<Vec<String>> = vec![Vec::new(); headers.len()];
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        for (col, cell) in cells.iter_mut().zip(record.iter()) {
            col.push(cell.to_string());
        }
    }
    if cells.first().is_none_or(Vec::is_empty) {
        return Err(DataError::Table("no data rows".into()));
    }

    let mut columns = Vec::with_capacity(headers.len());
    for (name, raw) in headers.iter().zip(cells) {
        let column = match schema.get(name) {
            Some(ColumnType::Numeric) => parse_numeric(name, &raw)?,
            Some(ColumnType::Categorical) => categorical(raw),
            None => match parse_numeric(name, &raw) {
                Ok(col) => col,
                Err(_) => categorical(raw),
            },
        };
        columns.push(column);
    }
    RawTable::new(headers, columns)
}

fn csv_error(e: csv::Error) -> DataError {
    match e.kind() {
        csv::ErrorKind::UnequalLengths {
            pos,
            expected_len,
            len,
        } => DataError::Table(format!(
            "ragged row{}: expected {expected_len} fields, found {len}",
            pos.as_ref()
                .map(|p| format!(" at line {}", p.line()))
                .unwrap_or_default()
        )),
        _ => DataError::Table(e.to_string()),
    }
}

fn is_missing(cell: &str) -> bool {
    MISSING_TOKENS.contains(&cell)
}

fn parse_numeric(name: &str, raw: &[String]) -> Result<Column, DataError> {
    raw.iter()
        .enumerate()
        .map(|(i, cell)| {
            if is_missing(cell) {
                Ok(f64::NAN)
            } else {
                cell.parse::<f64>().map_err(|_| DataError::BadNumber {
                    row: i + 1,
                    column: name.to_string(),
                    value: cell.clone(),
                })
            }
        })
        .collect::<Result<Vec<_>, _>>()
        .map(Column::Numeric)
}

fn categorical(raw: Vec<String>) -> Column {
    Column::Categorical(
        raw.into_iter()
            .map(|c| if is_missing(&c) { None } else { Some(c) })
            .collect(),
    )
}
