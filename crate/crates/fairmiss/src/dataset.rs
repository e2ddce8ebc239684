//! Typed tabular data with first-class missing values.
//!
//! A [`Dataset`] is a column-store of numeric and categorical columns plus a
//! per-cell missing mask. A masked cell's payload is never exposed: accessors
//! return `None` for masked positions. All selections ([`Dataset::select_rows`],
//! [`Dataset::split_by_missingness`], [`Dataset::stratified_split`],
//! [`Dataset::sample_rows`], [`Dataset::drop_columns`]) preserve row order so
//! that audits are reproducible bit-for-bit, and none of them masks or unmasks
//! any cell.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Read;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default raw-text tokens interpreted as missing cells.
pub const DEFAULT_MISSING_TOKENS: &[&str] = &["?", "", "NA"];

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("parse error at row {row}, column {column}: {raw:?}")]
    ParseError {
        row: usize,
        column: String,
        raw: String,
    },
    #[error("ragged row {row}: expected {expected} fields, found {found}")]
    RaggedRows {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("label column {column:?} has a missing value at row {row}")]
    MissingLabel { row: usize, column: String },
    #[error("duplicate column name {0:?}")]
    DuplicateColumn(String),
    #[error("columns have inconsistent lengths")]
    LengthMismatch,
    #[error("unknown column {0:?}")]
    UnknownColumn(String),
    #[error("the label column cannot be dropped")]
    LabelDropForbidden,
    #[error("sample of {requested} rows exceeds dataset size {available}")]
    SampleTooLarge { requested: usize, available: usize },
    #[error("degenerate split: class {class:?} would be absent from the training side")]
    DegenerateSplit { class: String },
    #[error("stratified split requires a label column")]
    NoLabel,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("schema file error: {0}")]
    SchemaFile(String),
}

/// Errors raised while resolving a [`GroupSpec`] against a concrete dataset.
#[derive(Debug, Error)]
pub enum GroupError {
    #[error("unknown protected attribute {0:?}")]
    UnknownColumn(String),
    #[error("protected attribute {0:?} is not categorical")]
    NotCategorical(String),
    #[error("protected attribute {column:?} has a missing value at row {row}")]
    MissingInProtected { column: String, row: usize },
    #[error("unknown category {value:?} in column {column:?}")]
    UnknownCategory { column: String, value: String },
    #[error("privileged values must form a strict nonempty subset of the categories")]
    NotStrictSubset,
    #[error("group {0:?} selects no rows")]
    EmptyGroup(&'static str),
    #[error("dataset has no label column")]
    NoLabel,
    #[error("label column is not categorical")]
    LabelNotCategorical,
    #[error("favourable class {0:?} is not a label value")]
    UnknownFavourable(String),
}

/// Column payload kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

/// Column payload. Masked positions hold an arbitrary placeholder that is
/// never read through the public accessors.
#[derive(Debug, Clone)]
pub enum ColumnData {
    Numeric(Vec<f64>),
    Categorical {
        codes: Vec<u32>,
        categories: Vec<String>,
    },
}

/// A named column with a missing mask (`true` = missing).
#[derive(Debug, Clone)]
pub struct Column {
    name: String,
    data: ColumnData,
    missing: Vec<bool>,
}

impl Column {
    pub fn new_numeric(name: impl Into<String>, values: Vec<f64>, missing: Vec<bool>) -> Self {
        assert_eq!(values.len(), missing.len(), "values/mask length mismatch");
        Column {
            name: name.into(),
            data: ColumnData::Numeric(values),
            missing,
        }
    }

    pub fn new_categorical(
        name: impl Into<String>,
        codes: Vec<u32>,
        categories: Vec<String>,
        missing: Vec<bool>,
    ) -> Self {
        assert_eq!(codes.len(), missing.len(), "codes/mask length mismatch");
        for (i, &c) in codes.iter().enumerate() {
            assert!(
                missing[i] || (c as usize) < categories.len(),
                "code out of range"
            );
        }
        Column {
            name: name.into(),
            data: ColumnData::Categorical { codes, categories },
            missing,
        }
    }

    /// Convenience constructor: build a categorical column from string values,
    /// assigning codes in order of first appearance. `None` marks a missing cell.
    pub fn from_strings(name: impl Into<String>, values: &[Option<&str>]) -> Self {
        let mut categories: Vec<String> = Vec::new();
        let mut index: HashMap<String, u32> = HashMap::new();
        let mut codes = Vec::with_capacity(values.len());
        let mut missing = Vec::with_capacity(values.len());
        for v in values {
            match v {
                Some(s) => {
                    let code = *index.entry((*s).to_string()).or_insert_with(|| {
                        categories.push((*s).to_string());
                        (categories.len() - 1) as u32
                    });
                    codes.push(code);
                    missing.push(false);
                }
                None => {
                    codes.push(0);
                    missing.push(true);
                }
            }
        }
        Column {
            name: name.into(),
            data: ColumnData::Categorical { codes, categories },
            missing,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> ColumnKind {
        match self.data {
            ColumnData::Numeric(_) => ColumnKind::Numeric,
            ColumnData::Categorical { .. } => ColumnKind::Categorical,
        }
    }

    pub fn len(&self) -> usize {
        self.missing.len()
    }

    pub fn is_empty(&self) -> bool {
        self.missing.is_empty()
    }

    pub fn is_missing(&self, row: usize) -> bool {
        self.missing[row]
    }

    pub fn missing_mask(&self) -> &[bool] {
        &self.missing
    }

    pub fn n_missing(&self) -> usize {
        self.missing.iter().filter(|&&m| m).count()
    }

    /// Numeric payload at `row`, `None` if the cell is masked or the column is
    /// categorical.
    pub fn numeric(&self, row: usize) -> Option<f64> {
        if self.missing[row] {
            return None;
        }
        match &self.data {
            ColumnData::Numeric(v) => Some(v[row]),
            ColumnData::Categorical { .. } => None,
        }
    }

    /// Category code at `row`, `None` if masked or numeric.
    pub fn code(&self, row: usize) -> Option<u32> {
        if self.missing[row] {
            return None;
        }
        match &self.data {
            ColumnData::Numeric(_) => None,
            ColumnData::Categorical { codes, .. } => Some(codes[row]),
        }
    }

    /// Category string at `row`, `None` if masked or numeric.
    pub fn category(&self, row: usize) -> Option<&str> {
        let code = self.code(row)?;
        match &self.data {
            ColumnData::Categorical { categories, .. } => Some(categories[code as usize].as_str()),
            ColumnData::Numeric(_) => None,
        }
    }

    /// The finite value set of a categorical column.
    pub fn categories(&self) -> Option<&[String]> {
        match &self.data {
            ColumnData::Categorical { categories, .. } => Some(categories),
            ColumnData::Numeric(_) => None,
        }
    }

    pub fn data(&self) -> &ColumnData {
        &self.data
    }

    fn select(&self, rows: &[usize]) -> Column {
        let missing = rows.iter().map(|&r| self.missing[r]).collect();
        let data = match &self.data {
            ColumnData::Numeric(v) => ColumnData::Numeric(rows.iter().map(|&r| v[r]).collect()),
            ColumnData::Categorical { codes, categories } => ColumnData::Categorical {
                codes: rows.iter().map(|&r| codes[r]).collect(),
                categories: categories.clone(),
            },
        };
        Column {
            name: self.name.clone(),
            data,
            missing,
        }
    }
}

/// Equality ignores the payload of masked cells.
impl PartialEq for Column {
    fn eq(&self, other: &Self) -> bool {
        if self.name != other.name
            || self.missing != other.missing
            || self.kind() != other.kind()
        {
            return false;
        }
        match (&self.data, &other.data) {
            (ColumnData::Numeric(a), ColumnData::Numeric(b)) => self
                .missing
                .iter()
                .enumerate()
                .all(|(i, &m)| m || a[i] == b[i]),
            (
                ColumnData::Categorical {
                    codes: ca,
                    categories: ka,
                },
                ColumnData::Categorical {
                    codes: cb,
                    categories: kb,
                },
            ) => self
                .missing
                .iter()
                .enumerate()
                .all(|(i, &m)| m || ka[ca[i] as usize] == kb[cb[i] as usize]),
            _ => false,
        }
    }
}

/// An immutable table of columns with an optional designated label column.
///
/// Invariants: all columns share the same length, column names are unique,
/// and the label column (when present) contains no missing values.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    columns: Vec<Column>,
    label_idx: Option<usize>,
    n_rows: usize,
}

impl Dataset {
    pub fn new(columns: Vec<Column>, label: Option<&str>) -> Result<Self, DatasetError> {
        let n_rows = columns.first().map_or(0, Column::len);
        if columns.iter().any(|c| c.len() != n_rows) {
            return Err(DatasetError::LengthMismatch);
        }
        let mut seen = BTreeSet::new();
        for c in &columns {
            if !seen.insert(c.name.clone()) {
                return Err(DatasetError::DuplicateColumn(c.name.clone()));
            }
        }
        let label_idx = match label {
            None => None,
            Some(name) => {
                let idx = columns
                    .iter()
                    .position(|c| c.name == name)
                    .ok_or_else(|| DatasetError::UnknownColumn(name.to_string()))?;
                if let Some(row) = columns[idx].missing.iter().position(|&m| m) {
                    return Err(DatasetError::MissingLabel {
                        row,
                        column: name.to_string(),
                    });
                }
                Some(idx)
            }
        };
        Ok(Dataset {
            columns,
            label_idx,
            n_rows,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn label(&self) -> Option<&Column> {
        self.label_idx.map(|i| &self.columns[i])
    }

    pub fn label_index(&self) -> Option<usize> {
        self.label_idx
    }

    pub fn label_name(&self) -> Option<&str> {
        self.label().map(Column::name)
    }

    /// Indices of non-label columns, in column order.
    pub fn feature_indices(&self) -> Vec<usize> {
        (0..self.columns.len())
            .filter(|&i| Some(i) != self.label_idx)
            .collect()
    }

    /// True iff any non-label cell of `row` is masked.
    pub fn row_has_missing(&self, row: usize) -> bool {
        self.columns
            .iter()
            .enumerate()
            .any(|(i, c)| Some(i) != self.label_idx && c.missing[row])
    }

    /// Per-row missingness flags over non-label cells.
    pub fn rows_with_missing(&self) -> Vec<bool> {
        let mut flags = vec![false; self.n_rows];
        for (i, c) in self.columns.iter().enumerate() {
            if Some(i) == self.label_idx {
                continue;
            }
            for (r, &m) in c.missing.iter().enumerate() {
                flags[r] |= m;
            }
        }
        flags
    }

    /// Total number of masked non-label cells.
    pub fn n_missing_cells(&self) -> usize {
        self.columns
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != self.label_idx)
            .map(|(_, c)| c.n_missing())
            .sum()
    }

    /// New dataset containing `rows` (indices into `self`) in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            columns: self.columns.iter().map(|c| c.select(rows)).collect(),
            label_idx: self.label_idx,
            n_rows: rows.len(),
        }
    }

    /// Partition rows into (with missing, without missing), preserving order.
    /// A row belongs to the first part iff any non-label cell is masked.
    pub fn split_by_missingness(&self) -> (Dataset, Dataset) {
        let flags = self.rows_with_missing();
        let with: Vec<usize> = (0..self.n_rows).filter(|&r| flags[r]).collect();
        let without: Vec<usize> = (0..self.n_rows).filter(|&r| !flags[r]).collect();
        (self.select_rows(&with), self.select_rows(&without))
    }

    /// Class-stratified train/test split, deterministic given `seed`.
    ///
    /// Per class, `round(n_class * test_fraction)` rows go to the test side,
    /// so per-class test proportions are within one row of `test_fraction`.
    /// Output rows keep their original relative order.
    pub fn stratified_split(
        &self,
        test_fraction: f64,
        seed: u64,
    ) -> Result<(Dataset, Dataset), DatasetError> {
        let (train, test) = self.stratified_split_indices(test_fraction, seed)?;
        Ok((self.select_rows(&train), self.select_rows(&test)))
    }

    /// Row indices of the stratified split, ascending on both sides.
    pub fn stratified_split_indices(
        &self,
        test_fraction: f64,
        seed: u64,
    ) -> Result<(Vec<usize>, Vec<usize>), DatasetError> {
        assert!(
            test_fraction > 0.0 && test_fraction < 1.0,
            "test_fraction must lie in (0,1)"
        );
        let label = self.label().ok_or(DatasetError::NoLabel)?;
        let categories = label
            .categories()
            .ok_or_else(|| DatasetError::SchemaMismatch("label must be categorical".into()))?
            .to_vec();
        let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); categories.len()];
        for r in 0..self.n_rows {
            let code = label.code(r).expect("label has no missing values");
            per_class[code as usize].push(r);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut test_rows: Vec<usize> = Vec::new();
        for (class_idx, rows) in per_class.iter().enumerate() {
            if rows.is_empty() {
                continue;
            }
            let n_test = (rows.len() as f64 * test_fraction).round() as usize;
            if n_test == rows.len() {
                return Err(DatasetError::DegenerateSplit {
                    class: categories[class_idx].clone(),
                });
            }
            let mut shuffled = rows.clone();
            shuffled.shuffle(&mut rng);
            test_rows.extend_from_slice(&shuffled[..n_test]);
        }
        let test_set: BTreeSet<usize> = test_rows.into_iter().collect();
        let train: Vec<usize> = (0..self.n_rows).filter(|r| !test_set.contains(r)).collect();
        let test: Vec<usize> = test_set.into_iter().collect();
        Ok((train, test))
    }

    /// Uniform sample of `n` rows without replacement, deterministic given
    /// `seed`, preserving original row order.
    pub fn sample_rows(&self, n: usize, seed: u64) -> Result<Dataset, DatasetError> {
        Ok(self.select_rows(&self.sample_indices(n, seed)?))
    }

    /// Ascending row indices of a uniform sample without replacement.
    pub fn sample_indices(&self, n: usize, seed: u64) -> Result<Vec<usize>, DatasetError> {
        if n > self.n_rows {
            return Err(DatasetError::SampleTooLarge {
                requested: n,
                available: self.n_rows,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut indices: Vec<usize> = (0..self.n_rows).collect();
        indices.shuffle(&mut rng);
        let mut chosen: Vec<usize> = indices[..n].to_vec();
        chosen.sort_unstable();
        Ok(chosen)
    }

    /// Remove the named feature columns. The label cannot be dropped.
    pub fn drop_columns(&self, names: &BTreeSet<String>) -> Result<Dataset, DatasetError> {
        for name in names {
            let idx = self
                .column_index(name)
                .ok_or_else(|| DatasetError::UnknownColumn(name.clone()))?;
            if Some(idx) == self.label_idx {
                return Err(DatasetError::LabelDropForbidden);
            }
        }
        let keep: Vec<&Column> = self
            .columns
            .iter()
            .filter(|c| !names.contains(&c.name))
            .collect();
        let label_name = self.label_name().map(str::to_string);
        Dataset::new(
            keep.into_iter().cloned().collect(),
            label_name.as_deref(),
        )
    }
}

/// Per-column schema declaration for CSV ingestion.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnDecl {
    pub kind: ColumnKind,
    #[serde(default)]
    pub is_label: bool,
}

/// Sidecar schema: column name → declaration. Every file column must be
/// declared and vice versa.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Schema {
    pub columns: BTreeMap<String, ColumnDecl>,
}

impl Schema {
    pub fn from_json(json: &str) -> Result<Schema, DatasetError> {
        let schema: Schema =
            serde_json::from_str(json).map_err(|e| DatasetError::SchemaFile(e.to_string()))?;
        let labels = schema.columns.values().filter(|d| d.is_label).count();
        if labels > 1 {
            return Err(DatasetError::SchemaFile(
                "schema declares more than one label column".into(),
            ));
        }
        Ok(schema)
    }

    pub fn label_column(&self) -> Option<&str> {
        self.columns
            .iter()
            .find(|(_, d)| d.is_label)
            .map(|(n, _)| n.as_str())
    }
}

/// Load an RFC-4180 CSV with a header row into a [`Dataset`].
///
/// Cells whose raw text is in `missing_tokens` are masked. A numeric parse
/// failure outside the token set is an error, as is a masked label cell.
pub fn load_csv<R: Read>(
    source: R,
    schema: &Schema,
    missing_tokens: &BTreeSet<String>,
) -> Result<Dataset, DatasetError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(source);
    let headers: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();

    let header_set: BTreeSet<&str> = headers.iter().map(String::as_str).collect();
    if header_set.len() != headers.len() {
        return Err(DatasetError::SchemaMismatch(
            "duplicate column names in header".into(),
        ));
    }
    let declared: BTreeSet<&str> = schema.columns.keys().map(String::as_str).collect();
    let missing_cols: Vec<&str> = declared.difference(&header_set).copied().collect();
    let extra_cols: Vec<&str> = header_set.difference(&declared).copied().collect();
    if !missing_cols.is_empty() || !extra_cols.is_empty() {
        return Err(DatasetError::SchemaMismatch(format!(
            "missing columns {:?}, extra columns {:?}",
            missing_cols, extra_cols
        )));
    }

    struct Builder {
        numeric: Vec<f64>,
        strings: Vec<Option<String>>,
        kind: ColumnKind,
        missing: Vec<bool>,
    }
    let mut builders: Vec<Builder> = headers
        .iter()
        .map(|h| Builder {
            numeric: Vec::new(),
            strings: Vec::new(),
            kind: schema.columns[h].kind,
            missing: Vec::new(),
        })
        .collect();

    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != headers.len() {
            return Err(DatasetError::RaggedRows {
                row: row_idx,
                expected: headers.len(),
                found: record.len(),
            });
        }
        for (col_idx, raw) in record.iter().enumerate() {
            let trimmed = raw.trim();
            let b = &mut builders[col_idx];
            if missing_tokens.contains(trimmed) {
                b.missing.push(true);
                match b.kind {
                    ColumnKind::Numeric => b.numeric.push(f64::NAN),
                    ColumnKind::Categorical => b.strings.push(None),
                }
                continue;
            }
            b.missing.push(false);
            match b.kind {
                ColumnKind::Numeric => {
                    let parsed: f64 =
                        trimmed
                            .parse()
                            .map_err(|_| DatasetError::ParseError {
                                row: row_idx,
                                column: headers[col_idx].clone(),
                                raw: raw.to_string(),
                            })?;
                    b.numeric.push(parsed);
                }
                ColumnKind::Categorical => b.strings.push(Some(trimmed.to_string())),
            }
        }
    }

    let columns: Vec<Column> = headers
        .iter()
        .zip(builders)
        .map(|(name, b)| match b.kind {
            ColumnKind::Numeric => Column::new_numeric(name.clone(), b.numeric, b.missing),
            ColumnKind::Categorical => {
                let refs: Vec<Option<&str>> = b.strings.iter().map(Option::as_deref).collect();
                Column::from_strings(name.clone(), &refs)
            }
        })
        .collect();

    Dataset::new(columns, schema.label_column())
}

/// Build the default missing-token set.
pub fn default_missing_tokens() -> BTreeSet<String> {
    DEFAULT_MISSING_TOKENS
        .iter()
        .map(|s| s.to_string())
        .collect()
}

/// The fairness frame: protected attribute, privileged value set, and
/// favourable class. All group metrics are oriented by a `GroupSpec`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub protected_attribute: String,
    pub privileged_values: Vec<String>,
    pub favourable_class: String,
}

impl GroupSpec {
    pub fn new(
        protected_attribute: impl Into<String>,
        privileged_values: Vec<String>,
        favourable_class: impl Into<String>,
    ) -> Self {
        GroupSpec {
            protected_attribute: protected_attribute.into(),
            privileged_values,
            favourable_class: favourable_class.into(),
        }
    }

    /// Resolve against a dataset: validates the protected attribute (categorical,
    /// fully observed), the privileged set (strict nonempty subset with both
    /// groups nonempty) and the favourable class, and precomputes per-row flags.
    pub fn resolve(&self, d: &Dataset) -> Result<GroupView, GroupError> {
        let col = d
            .column(&self.protected_attribute)
            .ok_or_else(|| GroupError::UnknownColumn(self.protected_attribute.clone()))?;
        let categories = col
            .categories()
            .ok_or_else(|| GroupError::NotCategorical(self.protected_attribute.clone()))?;
        if let Some(row) = col.missing_mask().iter().position(|&m| m) {
            return Err(GroupError::MissingInProtected {
                column: self.protected_attribute.clone(),
                row,
            });
        }
        if self.privileged_values.is_empty() {
            return Err(GroupError::NotStrictSubset);
        }
        let mut privileged_codes = vec![false; categories.len()];
        for v in &self.privileged_values {
            let code = categories.iter().position(|c| c == v).ok_or_else(|| {
                GroupError::UnknownCategory {
                    column: self.protected_attribute.clone(),
                    value: v.clone(),
                }
            })?;
            privileged_codes[code] = true;
        }
        if privileged_codes.iter().all(|&p| p) {
            return Err(GroupError::NotStrictSubset);
        }

        let label = d.label().ok_or(GroupError::NoLabel)?;
        let label_categories = label.categories().ok_or(GroupError::LabelNotCategorical)?;
        let favourable_code = label_categories
            .iter()
            .position(|c| c == &self.favourable_class)
            .ok_or_else(|| GroupError::UnknownFavourable(self.favourable_class.clone()))?
            as u32;

        let privileged: Vec<bool> = (0..d.n_rows())
            .map(|r| privileged_codes[col.code(r).expect("fully observed") as usize])
            .collect();
        if !privileged.iter().any(|&p| p) {
            return Err(GroupError::EmptyGroup("privileged"));
        }
        if privileged.iter().all(|&p| p) {
            return Err(GroupError::EmptyGroup("unprivileged"));
        }

        Ok(GroupView {
            privileged,
            favourable_code,
            label_categories: label_categories.to_vec(),
        })
    }
}

/// A [`GroupSpec`] resolved against one dataset: per-row privileged-group
/// membership plus the favourable label code. Multiclass labels collapse to
/// favourable-vs-rest through `favourable_code`.
#[derive(Debug, Clone)]
pub struct GroupView {
    privileged: Vec<bool>,
    favourable_code: u32,
    label_categories: Vec<String>,
}

impl GroupView {
    pub fn n_rows(&self) -> usize {
        self.privileged.len()
    }

    pub fn is_privileged(&self, row: usize) -> bool {
        self.privileged[row]
    }

    pub fn favourable_code(&self) -> u32 {
        self.favourable_code
    }

    /// The class set C of the label column this view was resolved against.
    pub fn label_categories(&self) -> &[String] {
        &self.label_categories
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> Dataset {
        // 5 rows: rows 1 and 3 (0-based) carry a masked feature cell.
        let age = Column::new_numeric(
            "age",
            vec![30.0, f64::NAN, 45.0, f64::NAN, 60.0],
            vec![false, true, false, true, false],
        );
        let group = Column::from_strings(
            "group",
            &[Some("a"), Some("b"), Some("a"), Some("b"), Some("a")],
        );
        let label = Column::from_strings(
            "y",
            &[Some("pos"), Some("neg"), Some("pos"), Some("pos"), Some("neg")],
        );
        Dataset::new(vec![age, group, label], Some("y")).unwrap()
    }

    #[test]
    fn split_by_missingness_partitions_rows() {
        let d = fixture();
        let (with, without) = d.split_by_missingness();
        assert_eq!(with.n_rows(), 2);
        assert_eq!(without.n_rows(), 3);
        // Rows 1 and 3 are the masked ones.
        assert_eq!(with.column("group").unwrap().category(0), Some("b"));
        assert_eq!(with.column("group").unwrap().category(1), Some("b"));
        assert_eq!(without.column("age").unwrap().numeric(0), Some(30.0));
        assert_eq!(without.column("age").unwrap().numeric(2), Some(60.0));
    }

    #[test]
    fn split_of_fully_observed_dataset_is_trivial() {
        let d = fixture();
        let (_, without) = d.split_by_missingness();
        let (w2, wo2) = without.split_by_missingness();
        assert_eq!(w2.n_rows(), 0);
        assert_eq!(wo2, without);
    }

    #[test]
    fn masked_payload_is_never_exposed() {
        let d = fixture();
        let age = d.column("age").unwrap();
        assert_eq!(age.numeric(1), None);
        assert_eq!(age.numeric(0), Some(30.0));
        assert_eq!(age.n_missing(), 2);
    }

    #[test]
    fn stratified_split_counts() {
        // 100 rows, balanced classes, fraction 0.3 -> 35/35 per class in train.
        let labels: Vec<Option<&str>> = (0..100)
            .map(|i| if i % 2 == 0 { Some("a") } else { Some("b") })
            .collect();
        let x = Column::new_numeric("x", (0..100).map(f64::from).collect(), vec![false; 100]);
        let y = Column::from_strings("y", &labels);
        let d = Dataset::new(vec![x, y], Some("y")).unwrap();
        let (train, test) = d.stratified_split(0.3, 7).unwrap();
        assert_eq!(train.n_rows(), 70);
        assert_eq!(test.n_rows(), 30);
        let count = |ds: &Dataset, class: &str| {
            let y = ds.column("y").unwrap();
            (0..ds.n_rows())
                .filter(|&r| y.category(r) == Some(class))
                .count()
        };
        assert_eq!(count(&train, "a"), 35);
        assert_eq!(count(&train, "b"), 35);
    }

    #[test]
    fn stratified_split_is_deterministic() {
        let d = fixture();
        let (tr1, te1) = d.stratified_split(0.4, 99).unwrap();
        let (tr2, te2) = d.stratified_split(0.4, 99).unwrap();
        assert_eq!(tr1, tr2);
        assert_eq!(te1, te2);
    }

    #[test]
    fn two_row_half_split_degenerates() {
        let x = Column::new_numeric("x", vec![1.0, 2.0], vec![false, false]);
        let y = Column::from_strings("y", &[Some("a"), Some("b")]);
        let d = Dataset::new(vec![x, y], Some("y")).unwrap();
        // round(1 * 0.5) = 1 sends each class's only row to test.
        assert!(matches!(
            d.stratified_split(0.5, 1),
            Err(DatasetError::DegenerateSplit { .. })
        ));
    }

    #[test]
    fn sample_rows_full_and_empty() {
        let d = fixture();
        let all = d.sample_rows(5, 3).unwrap();
        assert_eq!(all, d);
        let none = d.sample_rows(0, 3).unwrap();
        assert_eq!(none.n_rows(), 0);
        assert!(matches!(
            d.sample_rows(6, 3),
            Err(DatasetError::SampleTooLarge { .. })
        ));
    }

    #[test]
    fn drop_columns_behaviour() {
        let d = fixture();
        let empty = d.drop_columns(&BTreeSet::new()).unwrap();
        assert_eq!(empty, d);
        let dropped = d
            .drop_columns(&BTreeSet::from(["age".to_string()]))
            .unwrap();
        assert_eq!(dropped.n_cols(), 2);
        assert!(dropped.column("age").is_none());
        assert!(matches!(
            d.drop_columns(&BTreeSet::from(["y".to_string()])),
            Err(DatasetError::LabelDropForbidden)
        ));
        assert!(matches!(
            d.drop_columns(&BTreeSet::from(["nope".to_string()])),
            Err(DatasetError::UnknownColumn(_))
        ));
    }

    #[test]
    fn load_csv_masks_tokens_and_respects_schema() {
        let csv_data = "age,group,y\n30,a,pos\nNA,b,neg\n45,a,pos\n60,b,pos\n";
        let schema = Schema::from_json(
            r#"{"columns":{"age":{"kind":"numeric"},"group":{"kind":"categorical"},"y":{"kind":"categorical","is_label":true}}}"#,
        )
        .unwrap();
        let d = load_csv(csv_data.as_bytes(), &schema, &default_missing_tokens()).unwrap();
        assert_eq!(d.n_rows(), 4);
        assert_eq!(d.label_name(), Some("y"));
        let age = d.column("age").unwrap();
        assert_eq!(age.n_missing(), 1);
        assert!(age.is_missing(1));
        assert_eq!(age.numeric(3), Some(60.0));
    }

    #[test]
    fn load_csv_empty_body_is_fine() {
        let schema = Schema::from_json(
            r#"{"columns":{"x":{"kind":"numeric"},"y":{"kind":"categorical","is_label":true}}}"#,
        )
        .unwrap();
        let d = load_csv("x,y\n".as_bytes(), &schema, &default_missing_tokens()).unwrap();
        assert_eq!(d.n_rows(), 0);
    }

    #[test]
    fn load_csv_errors() {
        let schema = Schema::from_json(
            r#"{"columns":{"x":{"kind":"numeric"},"y":{"kind":"categorical","is_label":true}}}"#,
        )
        .unwrap();
        let tokens = default_missing_tokens();
        assert!(matches!(
            load_csv("x,z\n1,2\n".as_bytes(), &schema, &tokens),
            Err(DatasetError::SchemaMismatch(_))
        ));
        assert!(matches!(
            load_csv("x,y\nabc,pos\n".as_bytes(), &schema, &tokens),
            Err(DatasetError::ParseError { .. })
        ));
        assert!(matches!(
            load_csv("x,y\n1,\n".as_bytes(), &schema, &tokens),
            Err(DatasetError::MissingLabel { .. })
        ));
    }

    #[test]
    fn group_resolution_validates() {
        let d = fixture();
        let g = GroupSpec::new("group", vec!["a".into()], "pos");
        let view = g.resolve(&d).unwrap();
        assert!(view.is_privileged(0));
        assert!(!view.is_privileged(1));
        assert_eq!(view.favourable_code(), 0);

        let bad = GroupSpec::new("group", vec!["a".into(), "b".into()], "pos");
        assert!(matches!(bad.resolve(&d), Err(GroupError::NotStrictSubset)));
        let unknown = GroupSpec::new("group", vec!["c".into()], "pos");
        assert!(matches!(
            unknown.resolve(&d),
            Err(GroupError::UnknownCategory { .. })
        ));
        let numeric = GroupSpec::new("age", vec!["30".into()], "pos");
        assert!(matches!(
            numeric.resolve(&d),
            Err(GroupError::NotCategorical(_))
        ));
    }

    #[test]
    fn selections_conserve_masks() {
        let d = fixture();
        let total = d.n_missing_cells();
        let (with, without) = d.split_by_missingness();
        assert_eq!(with.n_missing_cells() + without.n_missing_cells(), total);
        let sampled = d.sample_rows(5, 11).unwrap();
        assert_eq!(sampled.n_missing_cells(), total);
    }
}
