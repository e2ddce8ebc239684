//! Seeded, repeatable experiment protocols: the four training regimes of the
//! subset comparison, the column-removal variant, and the deletion-vs-
//! imputation comparison, with Welch/Holm significance marks and
//! amplification marks against the dataset-level audit.
//!
//! Repetitions derive their seeds from the master seed by counter mixing, so
//! runs may execute in parallel and still produce byte-identical reports.

mod report;
pub mod stats;

pub use report::{emit_report, points_csv, to_json, to_markdown, ReportFormat};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataset::{Dataset, DatasetError, GroupError, GroupSpec};
use crate::handling::{apply_imputer, fit_imputer, HandlingError};
use crate::metrics::{self, LabelSource, MetricsError, Predictions};
use crate::models::{self, Model, ModelError, ModelSpec};
use crate::octagon::{self, OctagonError, TradeoffPoint};
use crate::seeding::derive_seed;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("{discarded} of {total} repetitions discarded (>10%): {first_reason}")]
    TooManyDiscarded {
        discarded: usize,
        total: usize,
        first_reason: String,
    },
    #[error("significance marks need at least 2 repetitions per regime")]
    InsufficientRepetitions,
    #[error("config selects no regimes")]
    NoRegimes,
    #[error("config selects no models")]
    NoModels,
    #[error("config selects no groups")]
    NoGroups,
    #[error("regime {0:?} is not valid for this protocol")]
    InvalidRegime(Regime),
    #[error("column removal left no feature columns")]
    NoColumnsLeft,
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Handling(#[from] HandlingError),
    #[error(transparent)]
    Octagon(#[from] OctagonError),
}

/// A training condition: the four subset regimes plus the two treatment
/// conditions of the deletion-vs-imputation protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    AllRows,
    WithMiss,
    WithoutMiss,
    SampleWithoutMiss,
    Deletion,
    Imputation,
}

impl Regime {
    pub fn label(&self) -> &'static str {
        match self {
            Regime::AllRows => "all_rows",
            Regime::WithMiss => "with_missing",
            Regime::WithoutMiss => "without_missing",
            Regime::SampleWithoutMiss => "sample_without_missing",
            Regime::Deletion => "deletion",
            Regime::Imputation => "imputation",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnPolicy {
    Keep,
    DropMissingColumns,
}

/// Whether the imputer is fitted on the whole dataset before splitting or on
/// the training side only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImputationMode {
    /// Impute the whole dataset before splitting. Leaks test statistics into
    /// training fills.
    FullDataset,
    /// Fit fill values on the training rows only.
    FitOnTrain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEntry {
    pub id: String,
    #[serde(flatten)]
    pub spec: ModelSpec,
}

fn default_regimes() -> Vec<Regime> {
    vec![
        Regime::AllRows,
        Regime::WithMiss,
        Regime::WithoutMiss,
        Regime::SampleWithoutMiss,
    ]
}

fn default_test_fraction() -> f64 {
    0.3
}

fn default_repetitions() -> usize {
    100
}

fn default_column_policy() -> ColumnPolicy {
    ColumnPolicy::Keep
}

fn default_imputation_mode() -> ImputationMode {
    ImputationMode::FullDataset
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset_id: String,
    /// Fairness frames audited per repetition; models are fitted once per
    /// regime and repetition, shared across groups.
    pub groups: Vec<GroupSpec>,
    #[serde(default = "default_regimes")]
    pub regimes: Vec<Regime>,
    #[serde(default = "default_column_policy")]
    pub column_policy: ColumnPolicy,
    pub models: Vec<ModelEntry>,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    pub master_seed: u64,
    #[serde(default = "default_imputation_mode")]
    pub imputation_mode: ImputationMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Subset,
    ColumnRemoval,
    ImputationVsDeletion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Amplification {
    Amplified,
    Reduced,
}

/// Aggregated outcome of one (group, model, regime) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeResult {
    pub group: String,
    pub model: String,
    pub regime: Regime,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub spd_mean: f64,
    pub spd_std: f64,
    /// Starred when this is the with-missing regime and its SPD differs
    /// significantly from both comparison regimes (Welch + Holm).
    pub significant: bool,
    /// |spd_mean| versus the matching dataset-audit subset column.
    pub amplification: Option<Amplification>,
    pub accuracy_samples: Vec<f64>,
    pub spd_samples: Vec<f64>,
}

/// Dataset-level audit snapshot for one group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupAudit {
    pub group: String,
    pub spec: GroupSpec,
    pub audit: metrics::SubsetAudit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineEntry {
    pub group: String,
    pub majority: TradeoffPoint,
    pub perfect: TradeoffPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoEntry {
    pub group: String,
    /// Labels "model/regime" of the non-dominated result points.
    pub front: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub protocol: Protocol,
    pub config: ExperimentConfig,
    pub dataset_audit: Vec<GroupAudit>,
    pub results: Vec<RegimeResult>,
    pub baselines: Vec<BaselineEntry>,
    pub pareto: Vec<ParetoEntry>,
    /// Digest of the test row identities, one per kept repetition; equal for
    /// every model within a repetition by construction.
    pub test_row_digests: Vec<String>,
    /// True-label SPD of each repetition's test set, per group.
    pub test_spd_samples: Vec<Vec<f64>>,
    /// Majority-class fraction of each repetition's test set.
    pub test_majority_fraction_samples: Vec<f64>,
    pub discarded_repetitions: Vec<usize>,
    pub columns_removed: Vec<String>,
    pub imputation_mode: Option<ImputationMode>,
    pub significance_procedure: String,
}

const SIGNIFICANCE_ALPHA: f64 = 0.05;

/// Welch pairwise comparison of the three regime SPD sequences with Holm
/// adjustment; the with-missing regime is starred when it differs from both
/// others at the family level.
pub fn significance_marks(
    with_miss: &[f64],
    without_miss: &[f64],
    sample_without: &[f64],
    alpha: f64,
) -> Result<SignificanceMarks, ExperimentError> {
    if with_miss.len() < 2 || without_miss.len() < 2 || sample_without.len() < 2 {
        return Err(ExperimentError::InsufficientRepetitions);
    }
    let p_values = [
        stats::welch_p_value(with_miss, without_miss),
        stats::welch_p_value(with_miss, sample_without),
        stats::welch_p_value(without_miss, sample_without),
    ];
    let adjusted_vec = stats::holm_adjust(&p_values);
    let adjusted = [adjusted_vec[0], adjusted_vec[1], adjusted_vec[2]];
    Ok(SignificanceMarks {
        with_starred: adjusted[0] < alpha && adjusted[1] < alpha,
        p_values,
        adjusted,
    })
}

/// Outcome of [`significance_marks`]: raw and Holm-adjusted p-values in the
/// order (with vs without, with vs sample, without vs sample).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceMarks {
    pub with_starred: bool,
    pub p_values: [f64; 3],
    pub adjusted: [f64; 3],
}

enum RepFailure {
    Discard(String),
    Fatal(ExperimentError),
}

struct RepOutcome {
    test_digest: String,
    test_spd_per_group: Vec<f64>,
    test_majority_fraction: f64,
    /// [condition][model] accuracy.
    accuracy: Vec<Vec<f64>>,
    /// [condition][model][group] SPD of predictions on the test set.
    spd: Vec<Vec<Vec<f64>>>,
}

fn digest_rows(dataset_id: &str, rows: &[usize]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(dataset_id.as_bytes());
    for &r in rows {
        hasher.update((r as u64).to_le_bytes());
    }
    hex::encode(&hasher.finalize()[..16])
}

fn majority_fraction(d: &Dataset) -> f64 {
    let label = d.label().expect("label present");
    let k = label.categories().map_or(0, <[String]>::len);
    let mut counts = vec![0usize; k];
    for r in 0..d.n_rows() {
        counts[label.code(r).expect("observed") as usize] += 1;
    }
    counts.iter().copied().max().unwrap_or(0) as f64 / d.n_rows().max(1) as f64
}

/// Uniform sample without replacement of `take` positions out of `len`,
/// returned ascending.
fn sample_positions(len: usize, take: usize, seed: u64) -> Vec<usize> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut positions: Vec<usize> = (0..len).collect();
    positions.shuffle(&mut rng);
    let mut chosen = positions[..take].to_vec();
    chosen.sort_unstable();
    chosen
}

/// Training-set row indices for one condition inside one repetition.
fn condition_rows(
    regime: Regime,
    train_idx: &[usize],
    flags: &[bool],
    sample_seed: u64,
) -> Result<Vec<usize>, RepFailure> {
    let rows = match regime {
        Regime::AllRows | Regime::Imputation => train_idx.to_vec(),
        Regime::WithMiss => train_idx.iter().copied().filter(|&r| flags[r]).collect(),
        Regime::WithoutMiss | Regime::Deletion => {
            train_idx.iter().copied().filter(|&r| !flags[r]).collect()
        }
        Regime::SampleWithoutMiss => {
            let with_n = train_idx.iter().filter(|&&r| flags[r]).count();
            let without: Vec<usize> = train_idx.iter().copied().filter(|&r| !flags[r]).collect();
            if with_n > without.len() {
                return Err(RepFailure::Discard(format!(
                    "matched sample of {with_n} exceeds the {} complete rows",
                    without.len()
                )));
            }
            // Sample positions within the complete subset, then map back.
            sample_positions(without.len(), with_n, sample_seed)
                .into_iter()
                .map(|p| without[p])
                .collect()
        }
    };
    if rows.is_empty() {
        return Err(RepFailure::Discard(format!(
            "regime {:?} has no training rows",
            regime
        )));
    }
    Ok(rows)
}

fn run_one_repetition(
    data: &Dataset,
    flags: &[bool],
    cfg: &ExperimentConfig,
    conditions: &[Regime],
    rep: usize,
) -> Result<RepOutcome, RepFailure> {
    let rep_seed = derive_seed(cfg.master_seed, rep as u64);
    let (train_idx, test_idx) = data
        .stratified_split_indices(cfg.test_fraction, rep_seed)
        .map_err(|e| match e {
            DatasetError::DegenerateSplit { .. } => RepFailure::Discard(e.to_string()),
            other => RepFailure::Fatal(other.into()),
        })?;
    let test = data.select_rows(&test_idx);
    let test_views: Vec<_> = cfg
        .groups
        .iter()
        .map(|g| g.resolve(&test))
        .collect::<Result<_, _>>()
        .map_err(|e| match e {
            GroupError::EmptyGroup(_) => RepFailure::Discard(e.to_string()),
            other => RepFailure::Fatal(other.into()),
        })?;
    let test_spd_per_group: Vec<f64> = test_views
        .iter()
        .map(|v| metrics::spd(LabelSource::Truth, &test, v))
        .collect::<Result<_, _>>()
        .map_err(|e| RepFailure::Fatal(e.into()))?;

    let mut accuracy = vec![vec![0.0; cfg.models.len()]; conditions.len()];
    let mut spd = vec![vec![vec![0.0; cfg.groups.len()]; cfg.models.len()]; conditions.len()];
    for (ci, &condition) in conditions.iter().enumerate() {
        let rows = condition_rows(condition, &train_idx, flags, derive_seed(rep_seed, 1))?;
        let train = data.select_rows(&rows);
        for (mi, entry) in cfg.models.iter().enumerate() {
            let fit_seed = derive_seed(
                rep_seed,
                2 + (ci as u64) * cfg.models.len() as u64 + mi as u64,
            );
            let model: Model = match models::fit(&train, &entry.spec, fit_seed) {
                Ok(m) => m,
                Err(ModelError::EmptyTrainingSet) => {
                    return Err(RepFailure::Discard(format!(
                        "regime {:?} emptied for model {}",
                        condition, entry.id
                    )))
                }
                Err(e) => return Err(RepFailure::Fatal(e.into())),
            };
            let predictions: Predictions = models::predict(&model, &test)
                .map_err(|e| RepFailure::Fatal(e.into()))?;
            accuracy[ci][mi] = metrics::accuracy(&predictions, &test)
                .map_err(|e| RepFailure::Fatal(e.into()))?;
            for (gi, view) in test_views.iter().enumerate() {
                spd[ci][mi][gi] =
                    metrics::spd(LabelSource::Predictions(&predictions), &test, view)
                        .map_err(|e| RepFailure::Fatal(e.into()))?;
            }
        }
    }
    Ok(RepOutcome {
        test_digest: digest_rows(&cfg.dataset_id, &test_idx),
        test_spd_per_group,
        test_majority_fraction: majority_fraction(&test),
        accuracy,
        spd,
    })
}

fn validate_config(cfg: &ExperimentConfig) -> Result<(), ExperimentError> {
    if cfg.groups.is_empty() {
        return Err(ExperimentError::NoGroups);
    }
    if cfg.models.is_empty() {
        return Err(ExperimentError::NoModels);
    }
    if cfg.regimes.is_empty() {
        return Err(ExperimentError::NoRegimes);
    }
    assert!(cfg.repetitions >= 1, "repetitions must be >= 1");
    Ok(())
}

/// Reference |SPD| from the dataset audit for a regime's matching subset.
fn amplification_reference(audit: &metrics::SubsetAudit, regime: Regime) -> Option<f64> {
    match regime {
        Regime::AllRows | Regime::Imputation | Regime::Deletion => Some(audit.all_rows.spd.abs()),
        Regime::WithMiss => audit.with_missing.as_ref().map(|r| r.spd.abs()),
        Regime::WithoutMiss | Regime::SampleWithoutMiss => {
            audit.without_missing.as_ref().map(|r| r.spd.abs())
        }
    }
}

fn aggregate(
    protocol: Protocol,
    data: &Dataset,
    cfg: &ExperimentConfig,
    conditions: &[Regime],
    outcomes: Vec<Result<RepOutcome, RepFailure>>,
    columns_removed: Vec<String>,
    imputation_mode: Option<ImputationMode>,
) -> Result<ExperimentReport, ExperimentError> {
    let mut kept: Vec<RepOutcome> = Vec::new();
    let mut discarded: Vec<usize> = Vec::new();
    let mut first_reason = String::new();
    for (rep, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(o) => kept.push(o),
            Err(RepFailure::Discard(reason)) => {
                if first_reason.is_empty() {
                    first_reason = reason;
                }
                discarded.push(rep);
            }
            Err(RepFailure::Fatal(e)) => return Err(e),
        }
    }
    if discarded.len() * 10 > cfg.repetitions {
        return Err(ExperimentError::TooManyDiscarded {
            discarded: discarded.len(),
            total: cfg.repetitions,
            first_reason,
        });
    }

    // Dataset-level audit per group, the amplification reference.
    let mut dataset_audit = Vec::new();
    let mut baselines = Vec::new();
    for spec in &cfg.groups {
        let view = spec.resolve(data)?;
        let audit = metrics::subset_audit(data, &view)?;
        let stats = octagon::dataset_stats(data, &view)?;
        let (majority, perfect) = octagon::baseline_points(&stats);
        dataset_audit.push(GroupAudit {
            group: spec.protected_attribute.clone(),
            spec: spec.clone(),
            audit,
        });
        baselines.push(BaselineEntry {
            group: spec.protected_attribute.clone(),
            majority,
            perfect,
        });
    }

    let mut results = Vec::new();
    for (gi, group_audit) in dataset_audit.iter().enumerate() {
        for (mi, entry) in cfg.models.iter().enumerate() {
            // Regime SPD sequences for the significance comparison.
            let spd_samples_for = |regime: Regime| -> Option<Vec<f64>> {
                conditions.iter().position(|&c| c == regime).map(|ci| {
                    kept.iter().map(|o| o.spd[ci][mi][gi]).collect()
                })
            };
            let marks = match (
                spd_samples_for(Regime::WithMiss),
                spd_samples_for(Regime::WithoutMiss),
                spd_samples_for(Regime::SampleWithoutMiss),
            ) {
                (Some(w), Some(wo), Some(s)) => {
                    significance_marks(&w, &wo, &s, SIGNIFICANCE_ALPHA).ok()
                }
                _ => None,
            };
            for (ci, &condition) in conditions.iter().enumerate() {
                let accuracy_samples: Vec<f64> =
                    kept.iter().map(|o| o.accuracy[ci][mi]).collect();
                let spd_samples: Vec<f64> = kept.iter().map(|o| o.spd[ci][mi][gi]).collect();
                let (acc_mean, acc_var) = stats::mean_var(&accuracy_samples);
                let (spd_mean, spd_var) = stats::mean_var(&spd_samples);
                let amplification = amplification_reference(&group_audit.audit, condition)
                    .map(|reference| {
                        if spd_mean.abs() > reference {
                            Amplification::Amplified
                        } else {
                            Amplification::Reduced
                        }
                    });
                results.push(RegimeResult {
                    group: group_audit.group.clone(),
                    model: entry.id.clone(),
                    regime: condition,
                    accuracy_mean: acc_mean,
                    accuracy_std: acc_var.sqrt(),
                    spd_mean,
                    spd_std: spd_var.sqrt(),
                    significant: condition == Regime::WithMiss
                        && marks.as_ref().is_some_and(|m| m.with_starred),
                    amplification,
                    accuracy_samples,
                    spd_samples,
                });
            }
        }
    }

    // Pareto fronts over the aggregated result points, per group.
    let mut pareto = Vec::new();
    for group_audit in &dataset_audit {
        let points: Vec<TradeoffPoint> = results
            .iter()
            .filter(|r| r.group == group_audit.group)
            .map(|r| {
                TradeoffPoint::new(
                    format!("{}/{}", r.model, r.regime.label()),
                    r.accuracy_mean,
                    r.spd_mean,
                )
            })
            .collect();
        pareto.push(ParetoEntry {
            group: group_audit.group.clone(),
            front: octagon::pareto_front(&points)
                .into_iter()
                .map(|p| p.label)
                .collect(),
        });
    }

    let n_groups = cfg.groups.len();
    Ok(ExperimentReport {
        protocol,
        config: cfg.clone(),
        dataset_audit,
        results,
        baselines,
        pareto,
        test_row_digests: kept.iter().map(|o| o.test_digest.clone()).collect(),
        test_spd_samples: (0..n_groups)
            .map(|gi| kept.iter().map(|o| o.test_spd_per_group[gi]).collect())
            .collect(),
        test_majority_fraction_samples: kept.iter().map(|o| o.test_majority_fraction).collect(),
        discarded_repetitions: discarded,
        columns_removed,
        imputation_mode,
        significance_procedure: format!("welch-holm alpha={SIGNIFICANCE_ALPHA}"),
    })
}

/// The subset-regime protocol: per repetition, stratified split, build the
/// selected training regimes from the training side, fit each model per
/// regime, and evaluate accuracy and SPD on the full mixed test set.
pub fn run_subset_experiment(
    d: &Dataset,
    cfg: &ExperimentConfig,
) -> Result<ExperimentReport, ExperimentError> {
    validate_config(cfg)?;
    for &r in &cfg.regimes {
        if matches!(r, Regime::Deletion | Regime::Imputation) {
            return Err(ExperimentError::InvalidRegime(r));
        }
    }
    for entry in &cfg.models {
        if !entry.spec.tolerates_missing() && d.n_missing_cells() > 0 {
            return Err(ExperimentError::Model(ModelError::MissingValuesUnsupported(
                "subset protocol on masked data",
            )));
        }
    }
    let flags = d.rows_with_missing();
    let outcomes: Vec<_> = (0..cfg.repetitions)
        .into_par_iter()
        .map(|rep| run_one_repetition(d, &flags, cfg, &cfg.regimes, rep))
        .collect();
    aggregate(Protocol::Subset, d, cfg, &cfg.regimes, outcomes, Vec::new(), None)
}

/// The subset protocol after removing every feature column that contains a
/// masked cell; with-missing regime membership is decided before removal.
pub fn run_column_removal_experiment(
    d: &Dataset,
    cfg: &ExperimentConfig,
) -> Result<ExperimentReport, ExperimentError> {
    validate_config(cfg)?;
    for &r in &cfg.regimes {
        if matches!(r, Regime::Deletion | Regime::Imputation) {
            return Err(ExperimentError::InvalidRegime(r));
        }
    }
    let flags = d.rows_with_missing();
    let (reduced, handling_report) = crate::handling::column_delete(d);
    if reduced.feature_indices().is_empty() {
        return Err(ExperimentError::NoColumnsLeft);
    }
    let outcomes: Vec<_> = (0..cfg.repetitions)
        .into_par_iter()
        .map(|rep| run_one_repetition(&reduced, &flags, cfg, &cfg.regimes, rep))
        .collect();
    aggregate(
        Protocol::ColumnRemoval,
        &reduced,
        cfg,
        &cfg.regimes,
        outcomes,
        handling_report.columns_removed,
        None,
    )
}

/// The deletion-vs-imputation protocol. By default the whole dataset is
/// imputed before splitting; the deletion condition trains on the rows that
/// were complete before imputation, and both conditions are evaluated on the
/// imputed test set. Majority and perfect baselines are appended when absent.
pub fn run_imputation_vs_deletion(
    d: &Dataset,
    cfg: &ExperimentConfig,
) -> Result<ExperimentReport, ExperimentError> {
    let mut cfg = cfg.clone();
    for (id, spec) in [("majority", ModelSpec::Majority), ("perfect", ModelSpec::Perfect)] {
        if !cfg.models.iter().any(|m| m.spec == spec) {
            cfg.models.push(ModelEntry {
                id: id.to_string(),
                spec,
            });
        }
    }
    validate_config(&cfg)?;
    let conditions = [Regime::Deletion, Regime::Imputation];
    let flags = d.rows_with_missing();

    match cfg.imputation_mode {
        ImputationMode::FullDataset => {
            let model = fit_imputer(d)?;
            let (imputed, _) = apply_imputer(&model, d)?;
            let outcomes: Vec<_> = (0..cfg.repetitions)
                .into_par_iter()
                .map(|rep| run_one_repetition(&imputed, &flags, &cfg, &conditions, rep))
                .collect();
            aggregate(
                Protocol::ImputationVsDeletion,
                &imputed,
                &cfg,
                &conditions,
                outcomes,
                Vec::new(),
                Some(ImputationMode::FullDataset),
            )
        }
        ImputationMode::FitOnTrain => {
            let outcomes: Vec<_> = (0..cfg.repetitions)
                .into_par_iter()
                .map(|rep| leakage_safe_repetition(d, &flags, &cfg, &conditions, rep))
                .collect();
            aggregate(
                Protocol::ImputationVsDeletion,
                d,
                &cfg,
                &conditions,
                outcomes,
                Vec::new(),
                Some(ImputationMode::FitOnTrain),
            )
        }
    }
}

/// One repetition of the leakage-safe mode: imputer fitted on the training
/// side only, then applied to train and test separately.
fn leakage_safe_repetition(
    d: &Dataset,
    flags: &[bool],
    cfg: &ExperimentConfig,
    conditions: &[Regime],
    rep: usize,
) -> Result<RepOutcome, RepFailure> {
    let rep_seed = derive_seed(cfg.master_seed, rep as u64);
    let (train_idx, test_idx) = d
        .stratified_split_indices(cfg.test_fraction, rep_seed)
        .map_err(|e| match e {
            DatasetError::DegenerateSplit { .. } => RepFailure::Discard(e.to_string()),
            other => RepFailure::Fatal(other.into()),
        })?;
    let train_raw = d.select_rows(&train_idx);
    let imputer = fit_imputer(&train_raw).map_err(|e| RepFailure::Discard(e.to_string()))?;
    let (train_imp, _) = apply_imputer(&imputer, &train_raw)
        .map_err(|e| RepFailure::Fatal(ExperimentError::Handling(e)))?;
    let test_raw = d.select_rows(&test_idx);
    let (test, _) = apply_imputer(&imputer, &test_raw)
        .map_err(|e| RepFailure::Fatal(ExperimentError::Handling(e)))?;

    let test_views: Vec<_> = cfg
        .groups
        .iter()
        .map(|g| g.resolve(&test))
        .collect::<Result<_, _>>()
        .map_err(|e| match e {
            GroupError::EmptyGroup(_) => RepFailure::Discard(e.to_string()),
            other => RepFailure::Fatal(other.into()),
        })?;
    let test_spd_per_group: Vec<f64> = test_views
        .iter()
        .map(|v| metrics::spd(LabelSource::Truth, &test, v))
        .collect::<Result<_, _>>()
        .map_err(|e| RepFailure::Fatal(e.into()))?;

    let deletion_rows: Vec<usize> = (0..train_idx.len())
        .filter(|&i| !flags[train_idx[i]])
        .collect();
    let mut accuracy = vec![vec![0.0; cfg.models.len()]; conditions.len()];
    let mut spd = vec![vec![vec![0.0; cfg.groups.len()]; cfg.models.len()]; conditions.len()];
    for (ci, &condition) in conditions.iter().enumerate() {
        let train = match condition {
            Regime::Imputation => train_imp.clone(),
            Regime::Deletion => {
                if deletion_rows.is_empty() {
                    return Err(RepFailure::Discard("no complete training rows".into()));
                }
                train_imp.select_rows(&deletion_rows)
            }
            other => return Err(RepFailure::Fatal(ExperimentError::InvalidRegime(other))),
        };
        for (mi, entry) in cfg.models.iter().enumerate() {
            let fit_seed = derive_seed(
                rep_seed,
                2 + (ci as u64) * cfg.models.len() as u64 + mi as u64,
            );
            let model = models::fit(&train, &entry.spec, fit_seed)
                .map_err(|e| RepFailure::Fatal(e.into()))?;
            let predictions = models::predict(&model, &test)
                .map_err(|e| RepFailure::Fatal(e.into()))?;
            accuracy[ci][mi] = metrics::accuracy(&predictions, &test)
                .map_err(|e| RepFailure::Fatal(e.into()))?;
            for (gi, view) in test_views.iter().enumerate() {
                spd[ci][mi][gi] =
                    metrics::spd(LabelSource::Predictions(&predictions), &test, view)
                        .map_err(|e| RepFailure::Fatal(e.into()))?;
            }
        }
    }
    Ok(RepOutcome {
        test_digest: digest_rows(&cfg.dataset_id, &test_idx),
        test_spd_per_group,
        test_majority_fraction: majority_fraction(&test),
        accuracy,
        spd,
    })
}
