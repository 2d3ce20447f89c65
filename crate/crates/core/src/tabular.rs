//! Columnar data model, CSV ingestion and equivalence classes.
//!
//! A [`Dataset`] is an immutable set of typed columns with a binary target and
//! a quasi-identifier (QI) set. Missing cells are `None`; a missing value never
//! equals anything, including another missing value.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cell spellings treated as missing on ingestion.
pub const MISSING_MARKERS: [&str; 3] = ["", "NA", "?"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Nominal,
    Integer,
    Float,
}

impl ColumnKind {
    pub fn is_numeric(self) -> bool {
        matches!(self, ColumnKind::Integer | ColumnKind::Float)
    }
}

impl fmt::Display for ColumnKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ColumnKind::Nominal => "nominal",
            ColumnKind::Integer => "integer",
            ColumnKind::Float => "float",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    Nominal(Vec<Option<String>>),
    Integer(Vec<Option<i64>>),
    Float(Vec<Option<f64>>),
}

impl ColumnData {
    pub fn kind(&self) -> ColumnKind {
        match self {
            ColumnData::Nominal(_) => ColumnKind::Nominal,
            ColumnData::Integer(_) => ColumnKind::Integer,
            ColumnData::Float(_) => ColumnKind::Float,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ColumnData::Nominal(v) => v.len(),
            ColumnData::Integer(v) => v.len(),
            ColumnData::Float(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Hashable identity of a single non-missing cell.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CellKey {
    Text(String),
    Int(i64),
    Float(u64),
}

impl CellKey {
    fn float(v: f64) -> Self {
        // +0.0 and -0.0 are the same value
        CellKey::Float((v + 0.0).to_bits())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub data: ColumnData,
}

impl Column {
    pub fn new(name: impl Into<String>, data: ColumnData) -> Self {
        Column {
            name: name.into(),
            data,
        }
    }

    pub fn nominal<S: Into<String>>(name: &str, values: impl IntoIterator<Item = Option<S>>) -> Self {
        Column::new(
            name,
            ColumnData::Nominal(values.into_iter().map(|v| v.map(Into::into)).collect()),
        )
    }

    pub fn integer(name: &str, values: impl IntoIterator<Item = i64>) -> Self {
        Column::new(name, ColumnData::Integer(values.into_iter().map(Some).collect()))
    }

    pub fn float(name: &str, values: impl IntoIterator<Item = f64>) -> Self {
        Column::new(name, ColumnData::Float(values.into_iter().map(Some).collect()))
    }

    pub fn kind(&self) -> ColumnKind {
        self.data.kind()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_missing(&self, row: usize) -> bool {
        match &self.data {
            ColumnData::Nominal(v) => v[row].is_none(),
            ColumnData::Integer(v) => v[row].is_none(),
            ColumnData::Float(v) => v[row].is_none(),
        }
    }

    /// Numeric view of a cell; `None` for missing cells and nominal columns.
    pub fn numeric(&self, row: usize) -> Option<f64> {
        match &self.data {
            ColumnData::Nominal(_) => None,
            ColumnData::Integer(v) => v[row].map(|x| x as f64),
            ColumnData::Float(v) => v[row],
        }
    }

    /// All non-missing numeric values, in row order.
    pub fn numeric_values(&self) -> Vec<f64> {
        (0..self.len()).filter_map(|i| self.numeric(i)).collect()
    }

    pub fn key(&self, row: usize) -> Option<CellKey> {
        match &self.data {
            ColumnData::Nominal(v) => v[row].as_ref().map(|s| CellKey::Text(s.clone())),
            ColumnData::Integer(v) => v[row].map(CellKey::Int),
            ColumnData::Float(v) => v[row].map(CellKey::float),
        }
    }

    /// Textual form of a cell as written to CSV. Missing cells are empty.
    ///
    /// Float cells always carry a decimal point or exponent so the column is
    /// read back as float.
    pub fn cell_string(&self, row: usize) -> String {
        match &self.data {
            ColumnData::Nominal(v) => v[row].clone().unwrap_or_default(),
            ColumnData::Integer(v) => v[row].map(|x| x.to_string()).unwrap_or_default(),
            ColumnData::Float(v) => v[row].map(format_float).unwrap_or_default(),
        }
    }

    /// Number of distinct non-missing values.
    pub fn distinct_count(&self) -> usize {
        (0..self.len())
            .filter_map(|i| self.key(i))
            .collect::<HashSet<_>>()
            .len()
    }

    pub fn distinct_fraction(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.distinct_count() as f64 / self.len() as f64
        }
    }
}

pub(crate) fn format_float(v: f64) -> String {
    let s = format!("{v}");
    if v.is_finite() && !s.contains(['.', 'e', 'E']) {
        format!("{s}.0")
    } else {
        s
    }
}

/// An immutable typed table with a binary target and a QI set.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    name: String,
    columns: Vec<Column>,
    n_rows: usize,
    target: String,
    qi: Vec<String>,
}

impl Dataset {
    /// Builds a dataset, checking every invariant. `qi = None` means every
    /// non-target column.
    pub fn new(
        name: impl Into<String>,
        columns: Vec<Column>,
        target: impl Into<String>,
        qi: Option<Vec<String>>,
    ) -> Result<Self> {
        let name = name.into();
        let target = target.into();
        let n_rows = columns.first().map(Column::len).unwrap_or(0);

        let mut seen = HashSet::new();
        for c in &columns {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::InvalidDataset(format!("duplicate column `{}`", c.name)));
            }
            if c.len() != n_rows {
                return Err(Error::InvalidDataset(format!(
                    "column `{}` has {} values, expected {}",
                    c.name,
                    c.len(),
                    n_rows
                )));
            }
        }

        let target_col = columns
            .iter()
            .find(|c| c.name == target)
            .ok_or_else(|| Error::TargetNotFound(target.clone()))?;
        if (0..n_rows).any(|i| target_col.is_missing(i)) {
            return Err(Error::InvalidDataset(format!(
                "target column `{target}` has missing labels"
            )));
        }
        let labels = target_col.distinct_count();
        if labels != 2 {
            return Err(Error::TargetNotBinary {
                column: target,
                labels,
            });
        }

        let qi = match qi {
            None => columns
                .iter()
                .filter(|c| c.name != target)
                .map(|c| c.name.clone())
                .collect(),
            Some(qi) => {
                // keep column order, drop duplicates
                let wanted: HashSet<&str> = qi.iter().map(String::as_str).collect();
                for q in &qi {
                    if *q == target {
                        return Err(Error::InvalidDataset(format!(
                            "target `{target}` cannot be a quasi-identifier"
                        )));
                    }
                    if !seen.contains(q.as_str()) {
                        return Err(Error::UnknownColumn(q.clone()));
                    }
                }
                columns
                    .iter()
                    .filter(|c| wanted.contains(c.name.as_str()))
                    .map(|c| c.name.clone())
                    .collect()
            }
        };

        Ok(Dataset {
            name,
            columns,
            n_rows,
            target,
            qi,
        })
    }

    /// Same name, target and QI (restricted to surviving columns) over a new
    /// column set.
    pub fn with_columns(&self, columns: Vec<Column>) -> Result<Self> {
        let names: HashSet<&str> = columns.iter().map(|c| c.name.as_str()).collect();
        let qi = self
            .qi
            .iter()
            .filter(|q| names.contains(q.as_str()))
            .cloned()
            .collect();
        Dataset::new(self.name.clone(), columns, self.target.clone(), Some(qi))
    }

    pub fn renamed(&self, name: impl Into<String>) -> Self {
        Dataset {
            name: name.into(),
            ..self.clone()
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn target(&self) -> &str {
        &self.target
    }

    pub fn qi(&self) -> &[String] {
        &self.qi
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn target_column(&self) -> &Column {
        self.column(&self.target).expect("target column checked at construction")
    }

    /// Non-target columns, in schema order.
    pub fn predictors(&self) -> impl Iterator<Item = &Column> {
        self.columns.iter().filter(move |c| c.name != self.target)
    }

    pub fn qi_columns(&self) -> impl Iterator<Item = &Column> {
        self.columns
            .iter()
            .filter(move |c| self.qi.contains(&c.name))
    }

    /// Target labels as strings, one per row.
    pub fn labels(&self) -> Vec<String> {
        let t = self.target_column();
        (0..self.n_rows).map(|i| t.cell_string(i)).collect()
    }

    /// The two target labels in sorted order.
    pub fn label_set(&self) -> Vec<String> {
        self.labels().into_iter().collect::<BTreeSet<_>>().into_iter().collect()
    }

    /// The less frequent target label; the lexicographically larger label on a tie.
    pub fn minority_label(&self) -> String {
        let mut counts: HashMap<String, usize> = HashMap::new();
        for l in self.labels() {
            *counts.entry(l).or_default() += 1;
        }
        let mut entries: Vec<_> = counts.into_iter().collect();
        entries.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| b.0.cmp(&a.0)));
        entries.remove(0).0
    }

    /// Row subset, in the given order. The subset may hold only one of the
    /// two target labels (a fold of a larger dataset).
    pub fn take_rows(&self, rows: &[usize]) -> Result<Self> {
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.n_rows) {
            return Err(Error::InvalidDataset(format!(
                "row {bad} out of range for {} rows",
                self.n_rows
            )));
        }
        let columns = self
            .columns
            .iter()
            .map(|c| {
                let data = match &c.data {
                    ColumnData::Nominal(v) => ColumnData::Nominal(rows.iter().map(|&i| v[i].clone()).collect()),
                    ColumnData::Integer(v) => ColumnData::Integer(rows.iter().map(|&i| v[i]).collect()),
                    ColumnData::Float(v) => ColumnData::Float(rows.iter().map(|&i| v[i]).collect()),
                };
                Column::new(c.name.clone(), data)
            })
            .collect();
        Ok(Dataset {
            name: self.name.clone(),
            columns,
            n_rows: rows.len(),
            target: self.target.clone(),
            qi: self.qi.clone(),
        })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            source: e,
        })?;
        let csv_err = |e| Error::Csv {
            path: path.to_path_buf(),
            source: e,
        };
        w.write_record(self.columns.iter().map(|c| c.name.as_str()))
            .map_err(csv_err)?;
        for row in 0..self.n_rows {
            w.write_record(self.columns.iter().map(|c| c.cell_string(row)))
                .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn is_missing_marker(s: &str) -> bool {
    MISSING_MARKERS.contains(&s.trim())
}

/// Infers one kind per raw column. Integer if every non-missing cell parses
/// as an integer, float if every cell parses as a finite number, nominal
/// otherwise (including all-missing columns).
pub fn infer_column_kinds<S: AsRef<str>>(raw: &[Vec<S>]) -> Vec<ColumnKind> {
    raw.iter().map(|col| infer_kind(col)).collect()
}

fn infer_kind<S: AsRef<str>>(cells: &[S]) -> ColumnKind {
    let mut present = cells
        .iter()
        .map(|c| c.as_ref().trim())
        .filter(|c| !is_missing_marker(c))
        .peekable();
    if present.peek().is_none() {
        return ColumnKind::Nominal;
    }
    let mut kind = ColumnKind::Integer;
    for cell in present {
        if kind == ColumnKind::Integer && cell.parse::<i64>().is_ok() {
            continue;
        }
        match cell.parse::<f64>() {
            Ok(v) if v.is_finite() => kind = ColumnKind::Float,
            _ => return ColumnKind::Nominal,
        }
    }
    kind
}

fn parse_column(name: &str, kind: ColumnKind, cells: Vec<String>) -> Column {
    let data = match kind {
        ColumnKind::Nominal => ColumnData::Nominal(
            cells
                .into_iter()
                .map(|c| (!is_missing_marker(&c)).then_some(c))
                .collect(),
        ),
        ColumnKind::Integer => ColumnData::Integer(
            cells
                .iter()
                .map(|c| c.trim().parse::<i64>().ok())
                .collect(),
        ),
        ColumnKind::Float => ColumnData::Float(
            cells
                .iter()
                .map(|c| c.trim().parse::<f64>().ok().filter(|v| v.is_finite()))
                .collect(),
        ),
    };
    Column::new(name, data)
}

/// Reads a CSV file with a mandatory header row. The dataset is named after
/// the file stem.
pub fn load_csv(path: &Path, target_name: &str) -> Result<Dataset> {
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string());
    let csv_err = |e| Error::Csv {
        path: path.to_path_buf(),
        source: e,
    };
    if !path.exists() {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"),
        ));
    }
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(csv_err)?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if !headers.iter().any(|h| h == target_name) {
        return Err(Error::TargetNotFound(target_name.to_string()));
    }

    let mut raw: Vec<Vec<String>> = vec![Vec::new(); headers.len()];
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        if record.len() != headers.len() {
            return Err(Error::RaggedRow {
                line: record.position().map(|p| p.line()).unwrap_or(0),
                expected: headers.len(),
                found: record.len(),
            });
        }
        for (col, cell) in raw.iter_mut().zip(record.iter()) {
            col.push(cell.to_string());
        }
    }

    let kinds = infer_column_kinds(&raw);
    let columns = headers
        .iter()
        .zip(kinds)
        .zip(raw)
        .map(|((h, k), cells)| parse_column(h, k, cells))
        .collect();
    Dataset::new(name, columns, target_name, None)
}

/// Removes every nominal or integer predictor whose distinct-value count
/// equals the number of rows. Returns the new dataset and any warnings.
pub fn drop_direct_identifiers(ds: &Dataset) -> Result<(Dataset, Vec<String>)> {
    let n = ds.n_rows();
    let is_identifier = |c: &Column| {
        c.name != ds.target()
            && c.kind() != ColumnKind::Float
            && n > 0
            && c.distinct_count() == n
    };
    let dropped: Vec<&str> = ds
        .columns()
        .iter()
        .filter(|c| is_identifier(c))
        .map(|c| c.name.as_str())
        .collect();
    if dropped.is_empty() {
        return Ok((ds.clone(), Vec::new()));
    }
    let remaining_qi = ds.qi().iter().filter(|q| !dropped.contains(&q.as_str())).count();
    if remaining_qi == 0 {
        return Ok((
            ds.clone(),
            vec![format!(
                "{}: every quasi-identifier looks like a direct identifier ({}); dataset kept as is",
                ds.name(),
                dropped.join(", ")
            )],
        ));
    }
    let kept = ds
        .columns()
        .iter()
        .filter(|c| !is_identifier(c))
        .cloned()
        .collect();
    Ok((ds.with_columns(kept)?, Vec::new()))
}

/// Partition of rows by their values on a set of columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EquivalenceClassIndex {
    classes: Vec<Vec<usize>>,
    class_of: Vec<usize>,
}

impl EquivalenceClassIndex {
    /// Classes ordered by their first row; rows within a class ascending.
    pub fn classes(&self) -> &[Vec<usize>] {
        &self.classes
    }

    pub fn class_of(&self, row: usize) -> usize {
        self.class_of[row]
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }
}

/// Groups rows that agree on every column in `over`. A row with a missing
/// cell in `over` is its own class. Empty `over` yields one class.
pub fn equivalence_classes(ds: &Dataset, over: &[&str]) -> Result<EquivalenceClassIndex> {
    let cols = over
        .iter()
        .map(|name| ds.column(name).ok_or_else(|| Error::UnknownColumn(name.to_string())))
        .collect::<Result<Vec<_>>>()?;

    let mut classes: Vec<Vec<usize>> = Vec::new();
    let mut class_of = Vec::with_capacity(ds.n_rows());
    let mut lookup: HashMap<Vec<CellKey>, usize> = HashMap::new();
    for row in 0..ds.n_rows() {
        let key: Option<Vec<CellKey>> = cols.iter().map(|c| c.key(row)).collect();
        let id = match key {
            Some(key) => *lookup.entry(key).or_insert_with(|| {
                classes.push(Vec::new());
                classes.len() - 1
            }),
            None => {
                classes.push(Vec::new());
                classes.len() - 1
            }
        };
        classes[id].push(row);
        class_of.push(id);
    }
    Ok(EquivalenceClassIndex { classes, class_of })
}
