//! Audit the interaction between missing data and group fairness in tabular
//! classification.
//!
//! The pieces fit together in a pipeline:
//!
//! 1. [`dataset`] — typed tabular data with a per-cell missing mask, CSV
//!    ingestion with a JSON schema sidecar, and the row/column selections
//!    (stratified splits, sampling, missingness partition) experiments need.
//! 2. [`missingness`] — diagnostics: per-column missing fractions, pattern
//!    tables, indicator correlations against the protected group and the
//!    favourable class, and a chi-square test of the missing-completely-at-
//!    random hypothesis backed by EM estimation of a multivariate normal.
//! 3. [`metrics`] — group fairness metrics (statistical parity difference,
//!    disparate impact, equal opportunity, average odds) and accuracy, over
//!    dataset labels or model predictions, plus the three-way subset audit.
//! 4. [`octagon`] — the convex feasibility region of (accuracy, SPD) pairs
//!    any classifier can reach on a labelled dataset, with baseline points,
//!    containment tests, a brute-force enumeration oracle, and Pareto fronts.
//! 5. [`handling`] — listwise deletion, column deletion, labelled-category
//!    encoding, and mean/mode imputation as dataset-to-dataset transforms.
//! 6. [`models`] — from-scratch classifiers: a CART decision tree with
//!    surrogate splits for missing values, majority and perfect baselines,
//!    logistic regression, naive Bayes, and a bagged random forest.
//! 7. [`experiments`] — seeded, repeatable experiment protocols comparing
//!    training regimes and deletion vs imputation, with significance marks
//!    and report emission (JSON / Markdown / CSV).
//!
//! Start with the runnable examples (`cargo run --example audit_fairness`)
//! or the `fairmiss` binary for a command-line front door.

pub mod dataset;
pub mod handling;
pub mod metrics;
pub mod missingness;
pub mod models;
pub mod octagon;
pub mod seeding;

pub use dataset::{Dataset, GroupSpec};
