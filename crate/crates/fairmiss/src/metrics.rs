//! Group fairness and performance metrics over datasets and predictions.
//!
//! Sign convention: differences are privileged minus unprivileged, so a
//! positive SPD means the privileged group receives the favourable outcome
//! more often. Zero is fairest.
//!
//! SPD is evaluated as a single division of exact integer-valued terms,
//! `(pos_priv * n_unpriv - pos_unpriv * n_priv) / (n_priv * n_unpriv)`, so
//! swapping the favourable class or swapping the groups negates it exactly
//! (bitwise), not merely approximately.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, GroupView};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("group {0:?} has no rows")]
    EmptyGroup(&'static str),
    #[error("ratio undefined: privileged positive rate is zero")]
    UndefinedRatio,
    #[error("rate undefined: group {0:?} has no {1} rows")]
    UndefinedRate(&'static str, &'static str),
    #[error("predictions cover {predictions} rows but the dataset has {rows}")]
    LengthMismatch { predictions: usize, rows: usize },
    #[error("dataset has no label column")]
    NoLabel,
}

/// Predicted labels aligned with a dataset's rows; codes index the class set
/// of the label column the producing model was trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predictions {
    pub labels: Vec<u32>,
}

impl Predictions {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Where labels come from: the dataset's own label column, or a model's
/// predictions over the same rows.
#[derive(Debug, Clone, Copy)]
pub enum LabelSource<'a> {
    Truth,
    Predictions(&'a Predictions),
}

/// Which side of the group split a metric refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Group {
    Privileged,
    Unprivileged,
}

/// An exact count/total pair; `value()` is the float quotient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rate {
    pub count: u64,
    pub total: u64,
}

impl Rate {
    pub fn value(&self) -> f64 {
        self.count as f64 / self.total as f64
    }
}

/// Confusion counts for one group.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn positives(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> u64 {
        self.tn + self.fp
    }
}

/// TP/FP/TN/FN tallies split by privileged vs unprivileged group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupConfusion {
    pub privileged: Confusion,
    pub unprivileged: Confusion,
}

fn favourable_flags(
    labels: LabelSource<'_>,
    rows: &Dataset,
    g: &GroupView,
) -> Result<Vec<bool>, MetricsError> {
    let fav = g.favourable_code();
    match labels {
        LabelSource::Truth => {
            let label = rows.label().ok_or(MetricsError::NoLabel)?;
            Ok((0..rows.n_rows())
                .map(|r| label.code(r).expect("label fully observed") == fav)
                .collect())
        }
        LabelSource::Predictions(p) => {
            if p.len() != rows.n_rows() {
                return Err(MetricsError::LengthMismatch {
                    predictions: p.len(),
                    rows: rows.n_rows(),
                });
            }
            Ok(p.labels.iter().map(|&c| c == fav).collect())
        }
    }
}

/// Favourable-outcome counts per group under the given label source.
fn group_counts(
    labels: LabelSource<'_>,
    rows: &Dataset,
    g: &GroupView,
) -> Result<(Rate, Rate), MetricsError> {
    let flags = favourable_flags(labels, rows, g)?;
    let mut priv_rate = Rate { count: 0, total: 0 };
    let mut unpriv_rate = Rate { count: 0, total: 0 };
    for (r, &fav) in flags.iter().enumerate() {
        let rate = if g.is_privileged(r) {
            &mut priv_rate
        } else {
            &mut unpriv_rate
        };
        rate.total += 1;
        rate.count += u64::from(fav);
    }
    if priv_rate.total == 0 {
        return Err(MetricsError::EmptyGroup("privileged"));
    }
    if unpriv_rate.total == 0 {
        return Err(MetricsError::EmptyGroup("unprivileged"));
    }
    Ok((priv_rate, unpriv_rate))
}

/// Fraction of the selected group's rows carrying the favourable label.
pub fn positive_rate(
    labels: LabelSource<'_>,
    rows: &Dataset,
    g: &GroupView,
    which: Group,
) -> Result<Rate, MetricsError> {
    let (priv_rate, unpriv_rate) = group_counts(labels, rows, g)?;
    Ok(match which {
        Group::Privileged => priv_rate,
        Group::Unprivileged => unpriv_rate,
    })
}

/// SPD from exact group rates: one floating division, so class and group
/// swaps negate the result bitwise.
pub fn spd_from_rates(privileged: Rate, unprivileged: Rate) -> f64 {
    let num = privileged.count as f64 * unprivileged.total as f64
        - unprivileged.count as f64 * privileged.total as f64;
    let den = privileged.total as f64 * unprivileged.total as f64;
    num / den
}

/// Statistical parity difference: privileged positive rate minus unprivileged
/// positive rate, in [-1, 1].
pub fn spd(
    labels: LabelSource<'_>,
    rows: &Dataset,
    g: &GroupView,
) -> Result<f64, MetricsError> {
    let (p, u) = group_counts(labels, rows, g)?;
    Ok(spd_from_rates(p, u))
}

/// Disparate impact: unprivileged positive rate over privileged positive rate.
pub fn disparate_impact(
    labels: LabelSource<'_>,
    rows: &Dataset,
    g: &GroupView,
) -> Result<f64, MetricsError> {
    let (p, u) = group_counts(labels, rows, g)?;
    if p.count == 0 {
        return Err(MetricsError::UndefinedRatio);
    }
    Ok((u.count as f64 * p.total as f64) / (p.count as f64 * u.total as f64))
}

/// Confusion tallies per group for predictions against the true labels.
pub fn group_confusion(
    pred: &Predictions,
    truth: &Dataset,
    g: &GroupView,
) -> Result<GroupConfusion, MetricsError> {
    let true_fav = favourable_flags(LabelSource::Truth, truth, g)?;
    let pred_fav = favourable_flags(LabelSource::Predictions(pred), truth, g)?;
    let mut out = GroupConfusion {
        privileged: Confusion::default(),
        unprivileged: Confusion::default(),
    };
    for r in 0..truth.n_rows() {
        let c = if g.is_privileged(r) {
            &mut out.privileged
        } else {
            &mut out.unprivileged
        };
        match (true_fav[r], pred_fav[r]) {
            (true, true) => c.tp += 1,
            (true, false) => c.fn_ += 1,
            (false, true) => c.fp += 1,
            (false, false) => c.tn += 1,
        }
    }
    if out.privileged.total() == 0 {
        return Err(MetricsError::EmptyGroup("privileged"));
    }
    if out.unprivileged.total() == 0 {
        return Err(MetricsError::EmptyGroup("unprivileged"));
    }
    Ok(out)
}

/// Equal opportunity difference: TPR(privileged) - TPR(unprivileged).
pub fn equal_opportunity_difference(
    pred: &Predictions,
    truth: &Dataset,
    g: &GroupView,
) -> Result<f64, MetricsError> {
    let gc = group_confusion(pred, truth, g)?;
    if gc.privileged.positives() == 0 {
        return Err(MetricsError::UndefinedRate("privileged", "positive"));
    }
    if gc.unprivileged.positives() == 0 {
        return Err(MetricsError::UndefinedRate("unprivileged", "positive"));
    }
    let tpr_p = gc.privileged.tp as f64 / gc.privileged.positives() as f64;
    let tpr_u = gc.unprivileged.tp as f64 / gc.unprivileged.positives() as f64;
    Ok(tpr_p - tpr_u)
}

/// Average odds difference: `((FPR_p - FPR_u) + (TPR_p - TPR_u)) / 2` with the
/// same privileged-minus-unprivileged orientation as SPD.
pub fn average_odds_difference(
    pred: &Predictions,
    truth: &Dataset,
    g: &GroupView,
) -> Result<f64, MetricsError> {
    let gc = group_confusion(pred, truth, g)?;
    for (c, name) in [(gc.privileged, "privileged"), (gc.unprivileged, "unprivileged")] {
        if c.positives() == 0 {
            return Err(MetricsError::UndefinedRate(
                if name == "privileged" { "privileged" } else { "unprivileged" },
                "positive",
            ));
        }
        if c.negatives() == 0 {
            return Err(MetricsError::UndefinedRate(
                if name == "privileged" { "privileged" } else { "unprivileged" },
                "negative",
            ));
        }
    }
    let tpr_p = gc.privileged.tp as f64 / gc.privileged.positives() as f64;
    let tpr_u = gc.unprivileged.tp as f64 / gc.unprivileged.positives() as f64;
    let fpr_p = gc.privileged.fp as f64 / gc.privileged.negatives() as f64;
    let fpr_u = gc.unprivileged.fp as f64 / gc.unprivileged.negatives() as f64;
    Ok(((fpr_p - fpr_u) + (tpr_p - tpr_u)) / 2.0)
}

/// Plain accuracy of predictions against the dataset's labels.
pub fn accuracy(pred: &Predictions, truth: &Dataset) -> Result<f64, MetricsError> {
    if pred.len() != truth.n_rows() {
        return Err(MetricsError::LengthMismatch {
            predictions: pred.len(),
            rows: truth.n_rows(),
        });
    }
    let label = truth.label().ok_or(MetricsError::NoLabel)?;
    let correct = (0..truth.n_rows())
        .filter(|&r| label.code(r) == Some(pred.labels[r]))
        .count();
    Ok(correct as f64 / truth.n_rows() as f64)
}

/// Fairness metrics for one (labels, rows, group) evaluation. Undefined
/// components are `None`, never silently zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub spd: f64,
    pub di: Option<f64>,
    pub eod: Option<f64>,
    pub avg_odds: Option<f64>,
    pub accuracy: Option<f64>,
    pub group_positive_rates: (Rate, Rate),
}

/// Dataset-level fairness report (true labels; accuracy/EOD/odds absent).
pub fn dataset_report(d: &Dataset, g: &GroupView) -> Result<FairnessReport, MetricsError> {
    let (p, u) = group_counts(LabelSource::Truth, d, g)?;
    Ok(FairnessReport {
        spd: spd_from_rates(p, u),
        di: if p.count == 0 {
            None
        } else {
            Some((u.count as f64 * p.total as f64) / (p.count as f64 * u.total as f64))
        },
        eod: None,
        avg_odds: None,
        accuracy: None,
        group_positive_rates: (p, u),
    })
}

/// Model-level fairness report for predictions evaluated against `truth`.
pub fn prediction_report(
    pred: &Predictions,
    truth: &Dataset,
    g: &GroupView,
) -> Result<FairnessReport, MetricsError> {
    let (p, u) = group_counts(LabelSource::Predictions(pred), truth, g)?;
    Ok(FairnessReport {
        spd: spd_from_rates(p, u),
        di: if p.count == 0 {
            None
        } else {
            Some((u.count as f64 * p.total as f64) / (p.count as f64 * u.total as f64))
        },
        eod: equal_opportunity_difference(pred, truth, g).ok(),
        avg_odds: average_odds_difference(pred, truth, g).ok(),
        accuracy: Some(accuracy(pred, truth)?),
        group_positive_rates: (p, u),
    })
}

/// The three-way subset audit: metrics for all rows, the rows with at least
/// one masked cell, and the fully observed rows. Subsets where a group is
/// empty report `None`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubsetAudit {
    pub n_rows: usize,
    pub n_with_missing: usize,
    pub all_rows: FairnessReport,
    pub with_missing: Option<FairnessReport>,
    pub without_missing: Option<FairnessReport>,
}

impl SubsetAudit {
    /// Whether the with-missing subset is the fairest of the three
    /// (smallest |SPD|); `None` when that subset's SPD is undefined.
    pub fn with_missing_is_fairest(&self) -> Option<bool> {
        let wm = self.with_missing.as_ref()?.spd.abs();
        let all = self.all_rows.spd.abs();
        let wo = self.without_missing.as_ref().map_or(f64::INFINITY, |r| r.spd.abs());
        Some(wm <= all && wm <= wo)
    }
}

/// Audit a dataset across the {all, with missing, without missing} subsets.
pub fn subset_audit(d: &Dataset, g: &GroupView) -> Result<SubsetAudit, MetricsError> {
    let all_rows = dataset_report(d, g)?;
    let flags = d.rows_with_missing();
    let with_idx: Vec<usize> = (0..d.n_rows()).filter(|&r| flags[r]).collect();
    let without_idx: Vec<usize> = (0..d.n_rows()).filter(|&r| !flags[r]).collect();
    let report_for = |idx: &[usize]| -> Option<FairnessReport> {
        if idx.is_empty() {
            return None;
        }
        let sub = d.select_rows(idx);
        // Re-resolve group flags by index into the parent view.
        let label = sub.label()?;
        let fav = g.favourable_code();
        let mut p = Rate { count: 0, total: 0 };
        let mut u = Rate { count: 0, total: 0 };
        for (sub_r, &orig_r) in idx.iter().enumerate() {
            let rate = if g.is_privileged(orig_r) { &mut p } else { &mut u };
            rate.total += 1;
            rate.count += u64::from(label.code(sub_r) == Some(fav));
        }
        if p.total == 0 || u.total == 0 {
            return None;
        }
        Some(FairnessReport {
            spd: spd_from_rates(p, u),
            di: if p.count == 0 {
                None
            } else {
                Some((u.count as f64 * p.total as f64) / (p.count as f64 * u.total as f64))
            },
            eod: None,
            avg_odds: None,
            accuracy: None,
            group_positive_rates: (p, u),
        })
    };
    Ok(SubsetAudit {
        n_rows: d.n_rows(),
        n_with_missing: with_idx.len(),
        all_rows,
        with_missing: report_for(&with_idx),
        without_missing: report_for(&without_idx),
    })
}
