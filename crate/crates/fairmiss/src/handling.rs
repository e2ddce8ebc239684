//! The four missing-data treatments as dataset-to-dataset transforms:
//! listwise deletion (LD), column deletion (CD), labelled category (LC), and
//! mean/mode imputation (IM) with fit/apply semantics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Column, ColumnKind, Dataset, DatasetError};

#[derive(Debug, Error)]
pub enum HandlingError {
    #[error("column {0:?} has no observed values to fit on")]
    AllMissingColumn(String),
    #[error("imputation model does not match the dataset: {0}")]
    SchemaMismatch(String),
    #[error("bin policy requires k >= 2, got {0}")]
    BadBinCount(usize),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

/// Which treatment produced a result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    /// Listwise (row) deletion.
    LD,
    /// Column deletion.
    CD,
    /// Labelled category.
    LC,
    /// Mean/mode imputation.
    IM,
}

/// What a treatment did to the dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HandlingReport {
    pub strategy: Strategy,
    pub rows_removed: usize,
    pub columns_removed: Vec<String>,
    pub cells_filled: usize,
    /// Set when listwise deletion removes every row.
    pub emptied: bool,
}

impl HandlingReport {
    fn new(strategy: Strategy) -> Self {
        HandlingReport {
            strategy,
            rows_removed: 0,
            columns_removed: Vec::new(),
            cells_filled: 0,
            emptied: false,
        }
    }
}

/// Discard every row containing a masked feature cell.
pub fn listwise_delete(d: &Dataset) -> (Dataset, HandlingReport) {
    let (with, without) = d.split_by_missingness();
    let mut report = HandlingReport::new(Strategy::LD);
    report.rows_removed = with.n_rows();
    report.emptied = without.n_rows() == 0;
    (without, report)
}

/// Remove every feature column containing at least one masked cell. The
/// label column is always retained.
pub fn column_delete(d: &Dataset) -> (Dataset, HandlingReport) {
    let mut report = HandlingReport::new(Strategy::CD);
    let drop: std::collections::BTreeSet<String> = d
        .columns()
        .iter()
        .enumerate()
        .filter(|(i, c)| Some(*i) != d.label_index() && c.n_missing() > 0)
        .map(|(_, c)| c.name().to_string())
        .collect();
    report.columns_removed = drop.iter().cloned().collect();
    let out = d.drop_columns(&drop).expect("columns exist and exclude the label");
    (out, report)
}

/// Labelled-category policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LcPolicy {
    /// Replace each affected column with a Boolean is-missing flag column.
    Flag,
    /// Equal-frequency bin numeric columns into `k` categories plus a
    /// distinguished "missing" category; categorical columns gain a
    /// "missing" category.
    Bin(usize),
}

const MISSING_CATEGORY: &str = "missing";

/// Represent missingness as an explicit category or flag attribute.
pub fn labelled_category(
    d: &Dataset,
    policy: LcPolicy,
) -> Result<(Dataset, HandlingReport), HandlingError> {
    if let LcPolicy::Bin(k) = policy {
        if k < 2 {
            return Err(HandlingError::BadBinCount(k));
        }
    }
    let mut report = HandlingReport::new(Strategy::LC);
    let mut columns: Vec<Column> = Vec::with_capacity(d.n_cols());
    for (i, col) in d.columns().iter().enumerate() {
        let is_label = Some(i) == d.label_index();
        let affected = !is_label && col.n_missing() > 0;
        match policy {
            LcPolicy::Flag => {
                if affected {
                    report.cells_filled += col.n_missing();
                    let flags: Vec<Option<&str>> = (0..col.len())
                        .map(|r| Some(if col.is_missing(r) { "true" } else { "false" }))
                        .collect();
                    columns.push(Column::from_strings(
                        format!("{}_missing", col.name()),
                        &flags,
                    ));
                } else {
                    columns.push(col.clone());
                }
            }
            LcPolicy::Bin(k) => {
                if is_label {
                    columns.push(col.clone());
                    continue;
                }
                match col.kind() {
                    ColumnKind::Categorical => {
                        if affected {
                            report.cells_filled += col.n_missing();
                            let values: Vec<Option<&str>> = (0..col.len())
                                .map(|r| Some(col.category(r).unwrap_or(MISSING_CATEGORY)))
                                .collect();
                            columns.push(Column::from_strings(col.name(), &values));
                        } else {
                            columns.push(col.clone());
                        }
                    }
                    ColumnKind::Numeric => {
                        report.cells_filled += col.n_missing();
                        columns.push(bin_numeric(col, k));
                    }
                }
            }
        }
    }
    let out = Dataset::new(columns, d.label_name())?;
    Ok((out, report))
}

/// Equal-frequency binning of the observed values; masked cells map to the
/// "missing" category. A constant column falls back to a single bin.
fn bin_numeric(col: &Column, k: usize) -> Column {
    let mut observed: Vec<f64> = (0..col.len()).filter_map(|r| col.numeric(r)).collect();
    observed.sort_by(f64::total_cmp);
    // Upper-edge thresholds for bins 1..k-1 at the equal-frequency quantiles.
    let mut thresholds: Vec<f64> = Vec::new();
    if !observed.is_empty() && observed.first() != observed.last() {
        for j in 1..k {
            // Last element of bin j when the observed values are dealt out
            // as evenly as possible: ceil(j * len / k) - 1.
            let pos = (j * observed.len()).div_ceil(k);
            let t = observed[(pos - 1).min(observed.len() - 1)];
            if thresholds.last() != Some(&t) && Some(&t) != observed.last() {
                thresholds.push(t);
            }
        }
    }
    let labels: Vec<String> = (0..=thresholds.len()).map(|i| format!("q{}", i + 1)).collect();
    let values: Vec<Option<String>> = (0..col.len())
        .map(|r| {
            Some(match col.numeric(r) {
                None => MISSING_CATEGORY.to_string(),
                Some(x) => {
                    let bin = thresholds.iter().filter(|&&t| x > t).count();
                    labels[bin].clone()
                }
            })
        })
        .collect();
    let refs: Vec<Option<&str>> = values.iter().map(|v| v.as_deref()).collect();
    Column::from_strings(col.name(), &refs)
}

/// Fill values learned from a training dataset: column mean for numeric,
/// column mode for categorical (ties break to the lexicographically smallest
/// category).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputationModel {
    pub fills: BTreeMap<String, FillValue>,
    pub fitted_on: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value")]
pub enum FillValue {
    Numeric(f64),
    Categorical(String),
}

/// Learn fill values from the observed cells of every feature column.
pub fn fit_imputer(train: &Dataset) -> Result<ImputationModel, HandlingError> {
    let mut fills = BTreeMap::new();
    for (i, col) in train.columns().iter().enumerate() {
        if Some(i) == train.label_index() {
            continue;
        }
        let fill = match col.kind() {
            ColumnKind::Numeric => {
                let observed: Vec<f64> = (0..col.len()).filter_map(|r| col.numeric(r)).collect();
                if observed.is_empty() {
                    return Err(HandlingError::AllMissingColumn(col.name().to_string()));
                }
                FillValue::Numeric(observed.iter().sum::<f64>() / observed.len() as f64)
            }
            ColumnKind::Categorical => {
                let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
                for r in 0..col.len() {
                    if let Some(c) = col.category(r) {
                        *counts.entry(c).or_insert(0) += 1;
                    }
                }
                // BTreeMap iteration is lexicographic, so on count ties the
                // smallest category wins.
                let mode = counts
                    .iter()
                    .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
                    .map(|(c, _)| c.to_string())
                    .ok_or_else(|| HandlingError::AllMissingColumn(col.name().to_string()))?;
                FillValue::Categorical(mode)
            }
        };
        fills.insert(col.name().to_string(), fill);
    }
    Ok(ImputationModel {
        fills,
        fitted_on: train.n_rows(),
    })
}

/// Replace every masked feature cell with its column's fill value. Observed
/// cells are untouched; the output has no masked feature cells.
pub fn apply_imputer(
    m: &ImputationModel,
    d: &Dataset,
) -> Result<(Dataset, HandlingReport), HandlingError> {
    let mut report = HandlingReport::new(Strategy::IM);
    let mut columns: Vec<Column> = Vec::with_capacity(d.n_cols());
    for (i, col) in d.columns().iter().enumerate() {
        let is_label = Some(i) == d.label_index();
        if is_label || col.n_missing() == 0 {
            columns.push(col.clone());
            continue;
        }
        let fill = m.fills.get(col.name()).ok_or_else(|| {
            HandlingError::SchemaMismatch(format!("no fill value for column {:?}", col.name()))
        })?;
        report.cells_filled += col.n_missing();
        match (col.kind(), fill) {
            (ColumnKind::Numeric, FillValue::Numeric(fill)) => {
                let values: Vec<f64> = (0..col.len())
                    .map(|r| col.numeric(r).unwrap_or(*fill))
                    .collect();
                columns.push(Column::new_numeric(col.name(), values, vec![false; col.len()]));
            }
            (ColumnKind::Categorical, FillValue::Categorical(fill)) => {
                let values: Vec<Option<&str>> = (0..col.len())
                    .map(|r| Some(col.category(r).unwrap_or(fill)))
                    .collect();
                columns.push(Column::from_strings(col.name(), &values));
            }
            _ => {
                return Err(HandlingError::SchemaMismatch(format!(
                    "fill value kind does not match column {:?}",
                    col.name()
                )))
            }
        }
    }
    let out = Dataset::new(columns, d.label_name())?;
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Column, Dataset};

    fn masked_fixture() -> Dataset {
        let x = Column::new_numeric(
            "x",
            vec![1.0, 3.0, f64::NAN, 4.0],
            vec![false, false, true, false],
        );
        let c = Column::from_strings("c", &[Some("a"), Some("a"), Some("b"), None]);
        let y = Column::from_strings("y", &[Some("p"), Some("n"), Some("p"), Some("n")]);
        Dataset::new(vec![x, c, y], Some("y")).unwrap()
    }

    #[test]
    fn listwise_delete_matches_partition() {
        let d = masked_fixture();
        let (out, report) = listwise_delete(&d);
        assert_eq!(out.n_rows(), 2);
        assert_eq!(report.rows_removed, 2);
        assert!(!report.emptied);
        // Identity on complete data.
        let (again, r2) = listwise_delete(&out);
        assert_eq!(again, out);
        assert_eq!(r2.rows_removed, 0);
    }

    #[test]
    fn listwise_delete_empty_result_is_flagged() {
        let x = Column::new_numeric("x", vec![f64::NAN, f64::NAN], vec![true, true]);
        let y = Column::from_strings("y", &[Some("p"), Some("n")]);
        let d = Dataset::new(vec![x, y], Some("y")).unwrap();
        let (out, report) = listwise_delete(&d);
        assert_eq!(out.n_rows(), 0);
        assert!(report.emptied);
    }

    #[test]
    fn column_delete_drops_exactly_masked_feature_columns() {
        let d = masked_fixture();
        let (out, report) = column_delete(&d);
        assert_eq!(report.columns_removed, vec!["c".to_string(), "x".to_string()]);
        assert_eq!(out.n_cols(), 1);
        assert!(out.label().is_some());
        // Identity on complete data.
        let complete = {
            let x = Column::new_numeric("x", vec![1.0, 2.0], vec![false, false]);
            let y = Column::from_strings("y", &[Some("p"), Some("n")]);
            Dataset::new(vec![x, y], Some("y")).unwrap()
        };
        let (same, r) = column_delete(&complete);
        assert_eq!(same, complete);
        assert!(r.columns_removed.is_empty());
    }

    #[test]
    fn flag_policy_replaces_affected_columns() {
        let d = masked_fixture();
        let (out, report) = labelled_category(&d, LcPolicy::Flag).unwrap();
        assert!(out.column("x").is_none());
        assert!(out.column("c").is_none());
        let fx = out.column("x_missing").unwrap();
        assert_eq!(fx.category(2), Some("true"));
        assert_eq!(fx.category(0), Some("false"));
        assert_eq!(report.cells_filled, 2);
        assert_eq!(out.n_missing_cells(), 0);
    }

    #[test]
    fn flag_policy_on_complete_dataset_keeps_columns() {
        let x = Column::new_numeric("x", vec![1.0, 2.0], vec![false, false]);
        let y = Column::from_strings("y", &[Some("p"), Some("n")]);
        let d = Dataset::new(vec![x, y], Some("y")).unwrap();
        let (out, _) = labelled_category(&d, LcPolicy::Flag).unwrap();
        // No affected columns: nothing replaced.
        assert_eq!(out, d);
    }

    #[test]
    fn bin_policy_bins_numeric_and_extends_categorical() {
        let d = masked_fixture();
        let (out, _) = labelled_category(&d, LcPolicy::Bin(2)).unwrap();
        let bx = out.column("x").unwrap();
        // Observed {1,3,4} split at the median: q1 = {1,3}, q2 = {4}.
        assert_eq!(bx.category(0), Some("q1"));
        assert_eq!(bx.category(1), Some("q1"));
        assert_eq!(bx.category(2), Some("missing"));
        assert_eq!(bx.category(3), Some("q2"));
        let bc = out.column("c").unwrap();
        assert_eq!(bc.category(3), Some("missing"));
        assert!(bc.categories().unwrap().contains(&"missing".to_string()));
        assert_eq!(out.n_missing_cells(), 0);
    }

    #[test]
    fn bin_policy_equal_frequency_counts() {
        // {1,2,m,4} with k=2: observed {1,2,4} -> q1 {1,2}, q2 {4}, missing {1}.
        let x = Column::new_numeric(
            "x",
            vec![1.0, 2.0, f64::NAN, 4.0],
            vec![false, false, true, false],
        );
        let y = Column::from_strings("y", &[Some("p"), Some("n"), Some("p"), Some("n")]);
        let d = Dataset::new(vec![x, y], Some("y")).unwrap();
        let (out, _) = labelled_category(&d, LcPolicy::Bin(2)).unwrap();
        let b = out.column("x").unwrap();
        let count = |cat: &str| (0..4).filter(|&r| b.category(r) == Some(cat)).count();
        assert_eq!(count("missing"), 1);
        assert_eq!(count("q1") + count("q2"), 3);
        assert!(count("q1") >= 1 && count("q2") >= 1);
    }

    #[test]
    fn constant_numeric_column_falls_back_to_one_bin() {
        let x = Column::new_numeric(
            "x",
            vec![5.0, 5.0, f64::NAN],
            vec![false, false, true],
        );
        let y = Column::from_strings("y", &[Some("p"), Some("n"), Some("p")]);
        let d = Dataset::new(vec![x, y], Some("y")).unwrap();
        let (out, _) = labelled_category(&d, LcPolicy::Bin(4)).unwrap();
        let b = out.column("x").unwrap();
        assert_eq!(b.category(0), Some("q1"));
        assert_eq!(b.category(1), Some("q1"));
        assert_eq!(b.category(2), Some("missing"));
    }

    #[test]
    fn imputer_mean_and_mode() {
        let x = Column::new_numeric("x", vec![1.0, 3.0, f64::NAN], vec![false, false, true]);
        let c = Column::from_strings("c", &[Some("a"), Some("a"), Some("b")]);
        let y = Column::from_strings("y", &[Some("p"), Some("n"), Some("p")]);
        let d = Dataset::new(vec![x, c, y], Some("y")).unwrap();
        let model = fit_imputer(&d).unwrap();
        assert_eq!(model.fills["x"], FillValue::Numeric(2.0));
        assert_eq!(model.fills["c"], FillValue::Categorical("a".to_string()));
        assert_eq!(model.fitted_on, 3);
    }

    #[test]
    fn mode_ties_break_lexicographically() {
        let c = Column::from_strings("c", &[Some("b"), Some("a"), Some("b"), Some("a")]);
        let y = Column::from_strings("y", &[Some("p"), Some("n"), Some("p"), Some("n")]);
        let d = Dataset::new(vec![c, y], Some("y")).unwrap();
        let model = fit_imputer(&d).unwrap();
        assert_eq!(model.fills["c"], FillValue::Categorical("a".to_string()));
    }

    #[test]
    fn apply_imputer_fills_and_preserves_observed() {
        let d = masked_fixture();
        let model = fit_imputer(&d).unwrap();
        let (out, report) = apply_imputer(&model, &d).unwrap();
        assert_eq!(report.cells_filled, 2);
        assert_eq!(out.n_missing_cells(), 0);
        let x = out.column("x").unwrap();
        assert_eq!(x.numeric(2), Some((1.0 + 3.0 + 4.0) / 3.0));
        assert_eq!(x.numeric(0), Some(1.0));
        let c = out.column("c").unwrap();
        assert_eq!(c.category(3), Some("a"));
        // Idempotence: applying again changes nothing.
        let (again, r2) = apply_imputer(&model, &out).unwrap();
        assert_eq!(again, out);
        assert_eq!(r2.cells_filled, 0);
    }

    #[test]
    fn apply_imputer_identity_on_complete_data() {
        let x = Column::new_numeric("x", vec![1.0, 2.0], vec![false, false]);
        let y = Column::from_strings("y", &[Some("p"), Some("n")]);
        let d = Dataset::new(vec![x, y], Some("y")).unwrap();
        let model = fit_imputer(&d).unwrap();
        let (out, report) = apply_imputer(&model, &d).unwrap();
        assert_eq!(out, d);
        assert_eq!(report.cells_filled, 0);
    }

    #[test]
    fn all_missing_column_is_rejected() {
        let x = Column::new_numeric("x", vec![f64::NAN, f64::NAN], vec![true, true]);
        let y = Column::from_strings("y", &[Some("p"), Some("n")]);
        let d = Dataset::new(vec![x, y], Some("y")).unwrap();
        assert!(matches!(
            fit_imputer(&d),
            Err(HandlingError::AllMissingColumn(_))
        ));
    }

    #[test]
    fn imputation_model_json_round_trip() {
        let d = masked_fixture();
        let model = fit_imputer(&d).unwrap();
        let json = serde_json::to_string(&model).unwrap();
        let back: ImputationModel = serde_json::from_str(&json).unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn strategies_are_idempotent() {
        let d = masked_fixture();
        let (ld1, _) = listwise_delete(&d);
        let (ld2, _) = listwise_delete(&ld1);
        assert_eq!(ld1, ld2);
        let (cd1, _) = column_delete(&d);
        let (cd2, _) = column_delete(&cd1);
        assert_eq!(cd1, cd2);
        for policy in [LcPolicy::Flag, LcPolicy::Bin(3)] {
            let (lc1, _) = labelled_category(&d, policy).unwrap();
            let (lc2, _) = labelled_category(&lc1, policy).unwrap();
            assert_eq!(lc1, lc2, "policy {:?}", policy);
        }
        let model = fit_imputer(&d).unwrap();
        let (im1, _) = apply_imputer(&model, &d).unwrap();
        let (im2, _) = apply_imputer(&model, &im1).unwrap();
        assert_eq!(im1, im2);
    }

    #[test]
    fn imputation_preserves_dataset_spd_when_group_and_label_observed() {
        use crate::dataset::GroupSpec;
        use crate::metrics::{spd, LabelSource};
        let d = masked_fixture();
        let full_group = Column::from_strings("g", &[Some("a"), Some("a"), Some("b"), Some("b")]);
        let mut cols = d.columns().to_vec();
        cols.push(full_group);
        let d = Dataset::new(cols, Some("y")).unwrap();
        let gv = GroupSpec::new("g", vec!["a".into()], "p").resolve(&d).unwrap();
        let before = spd(LabelSource::Truth, &d, &gv).unwrap();
        let model = fit_imputer(&d).unwrap();
        let (imputed, _) = apply_imputer(&model, &d).unwrap();
        let gv2 = GroupSpec::new("g", vec!["a".into()], "p").resolve(&imputed).unwrap();
        let after = spd(LabelSource::Truth, &imputed, &gv2).unwrap();
        assert_eq!(before, after);
    }
}
