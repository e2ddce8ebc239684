//! From-scratch classifiers: a missing-tolerant CART with surrogate splits,
//! majority and perfect baselines, logistic regression, naive Bayes, and a
//! bagged random forest.
//!
//! `fit` and `predict` are pure functions of their inputs and the seed.
//! CART, Majority and Perfect accept masked cells; the other variants reject
//! them. Fitted models serialise to JSON for audit reproducibility.

mod cart;
mod forest;
mod logistic;
mod naive_bayes;

pub use cart::{CartParams, MissingPolicy, SplitTest, Surrogate, TreeNode};
pub use forest::{ForestParams, Mtry};
pub use logistic::{LogisticModel, LogisticParams};
pub use naive_bayes::NbModel;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{ColumnKind, Dataset};
use crate::metrics::Predictions;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("{0} does not support missing values")]
    MissingValuesUnsupported(&'static str),
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("dataset has no label column")]
    NoLabel,
    #[error("logistic regression requires a binary label, got {0} classes")]
    MulticlassUnsupported(usize),
    #[error("the perfect oracle can only run on rows with true labels")]
    OracleNeedsLabels,
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("feature importance is only defined for tree models")]
    NotATree,
}

/// Which model to fit, with its hyper-parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Majority,
    Perfect,
    Cart {
        #[serde(default)]
        params: CartParams,
    },
    Logistic {
        #[serde(default)]
        params: LogisticParams,
    },
    NaiveBayes,
    Forest {
        #[serde(default)]
        params: ForestParams,
    },
}

impl ModelSpec {
    /// Whether the variant can consume datasets with masked cells.
    pub fn tolerates_missing(&self) -> bool {
        matches!(
            self,
            ModelSpec::Majority | ModelSpec::Perfect | ModelSpec::Cart { .. }
        )
    }

    fn name(&self) -> &'static str {
        match self {
            ModelSpec::Majority => "majority",
            ModelSpec::Perfect => "perfect",
            ModelSpec::Cart { .. } => "cart",
            ModelSpec::Logistic { .. } => "logistic",
            ModelSpec::NaiveBayes => "naive_bayes",
            ModelSpec::Forest { .. } => "forest",
        }
    }
}

/// Schema of one training feature as the model saw it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMeta {
    pub name: String,
    pub kind: ColumnKind,
    /// Category strings for categorical features, empty for numeric.
    pub categories: Vec<String>,
}

/// A fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub label_name: String,
    /// The class set C, in the training label's dictionary order.
    pub classes: Vec<String>,
    pub features: Vec<FeatureMeta>,
    pub seed: u64,
    pub variant: ModelVariant,
    /// Set when training degenerated to a constant model (single class).
    pub single_class: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum ModelVariant {
    Majority {
        class: u32,
    },
    PerfectOracle,
    Cart {
        root: TreeNode,
        params: CartParams,
    },
    Logistic(LogisticModel),
    NaiveBayes(NbModel),
    Forest {
        trees: Vec<TreeNode>,
        params: ForestParams,
        tree_seeds: Vec<u64>,
    },
}

fn feature_meta(train: &Dataset) -> Vec<FeatureMeta> {
    train
        .feature_indices()
        .into_iter()
        .map(|i| {
            let c = &train.columns()[i];
            FeatureMeta {
                name: c.name().to_string(),
                kind: c.kind(),
                categories: c.categories().map(<[String]>::to_vec).unwrap_or_default(),
            }
        })
        .collect()
}

fn majority_class(train: &Dataset) -> u32 {
    let label = train.label().expect("label checked");
    let k = label.categories().map_or(0, <[String]>::len);
    let mut counts = vec![0usize; k];
    for r in 0..train.n_rows() {
        counts[label.code(r).expect("label observed") as usize] += 1;
    }
    // Ties break to the class listed first in C.
    let mut best = 0;
    for (c, &n) in counts.iter().enumerate() {
        if n > counts[best] {
            best = c;
        }
    }
    best as u32
}

/// Fit a model. Deterministic given `(train, spec, seed)`. A single-class
/// training set degenerates to a constant model.
pub fn fit(train: &Dataset, spec: &ModelSpec, seed: u64) -> Result<Model, ModelError> {
    if train.n_rows() == 0 {
        return Err(ModelError::EmptyTrainingSet);
    }
    let label = train.label().ok_or(ModelError::NoLabel)?;
    let classes = label
        .categories()
        .ok_or_else(|| ModelError::SchemaMismatch("label must be categorical".into()))?
        .to_vec();
    if !spec.tolerates_missing() && train.n_missing_cells() > 0 {
        return Err(ModelError::MissingValuesUnsupported(spec.name()));
    }

    let mut present = vec![false; classes.len()];
    for r in 0..train.n_rows() {
        present[label.code(r).expect("label observed") as usize] = true;
    }
    let single_class = present.iter().filter(|&&p| p).count() == 1;

    let base = Model {
        label_name: label.name().to_string(),
        classes,
        features: feature_meta(train),
        seed,
        variant: ModelVariant::PerfectOracle,
        single_class,
    };

    if single_class && !matches!(spec, ModelSpec::Perfect) {
        return Ok(Model {
            variant: ModelVariant::Majority {
                class: majority_class(train),
            },
            ..base
        });
    }

    let variant = match spec {
        ModelSpec::Majority => ModelVariant::Majority {
            class: majority_class(train),
        },
        ModelSpec::Perfect => ModelVariant::PerfectOracle,
        ModelSpec::Cart { params } => ModelVariant::Cart {
            root: cart::fit_tree(train, params, None, seed),
            params: params.clone(),
        },
        ModelSpec::Logistic { params } => {
            ModelVariant::Logistic(logistic::fit(train, params, &base.classes)?)
        }
        ModelSpec::NaiveBayes => ModelVariant::NaiveBayes(naive_bayes::fit(train, &base.classes)),
        ModelSpec::Forest { params } => {
            let (trees, tree_seeds) = forest::fit(train, params, seed);
            ModelVariant::Forest {
                trees,
                params: params.clone(),
                tree_seeds,
            }
        }
    };
    Ok(Model { variant, ..base })
}

/// How a model feature resolves against a prediction dataset.
pub(crate) struct Binding {
    /// Dataset column index per model feature.
    pub cols: Vec<usize>,
    /// For categorical features, dataset code -> model category index
    /// (-1 when the dataset category was unseen at training time).
    pub cat_maps: Vec<Vec<i64>>,
}

pub(crate) enum FeatureValue {
    Missing,
    Numeric(f64),
    /// Model-side category index; -1 for a category unseen in training.
    Category(i64),
}

impl Binding {
    pub(crate) fn resolve(model: &Model, rows: &Dataset) -> Result<Binding, ModelError> {
        let mut cols = Vec::with_capacity(model.features.len());
        let mut cat_maps = Vec::with_capacity(model.features.len());
        for meta in &model.features {
            let idx = rows.column_index(&meta.name).ok_or_else(|| {
                ModelError::SchemaMismatch(format!("column {:?} absent", meta.name))
            })?;
            let col = &rows.columns()[idx];
            if col.kind() != meta.kind {
                return Err(ModelError::SchemaMismatch(format!(
                    "column {:?} changed kind",
                    meta.name
                )));
            }
            let map = match col.categories() {
                None => Vec::new(),
                Some(categories) => categories
                    .iter()
                    .map(|c| {
                        meta.categories
                            .iter()
                            .position(|m| m == c)
                            .map_or(-1, |p| p as i64)
                    })
                    .collect(),
            };
            cols.push(idx);
            cat_maps.push(map);
        }
        if let Some(label) = rows.label() {
            if label.categories() != Some(model.classes.as_slice()) {
                return Err(ModelError::SchemaMismatch(
                    "label class set differs from the training label".into(),
                ));
            }
        }
        Ok(Binding { cols, cat_maps })
    }

    pub(crate) fn value(&self, rows: &Dataset, feature: usize, row: usize) -> FeatureValue {
        let col = &rows.columns()[self.cols[feature]];
        if col.is_missing(row) {
            return FeatureValue::Missing;
        }
        match col.kind() {
            ColumnKind::Numeric => FeatureValue::Numeric(col.numeric(row).expect("observed")),
            ColumnKind::Categorical => {
                let code = col.code(row).expect("observed") as usize;
                FeatureValue::Category(self.cat_maps[feature][code])
            }
        }
    }
}

/// Highest-probability class with ties to the class listed first in C.
pub(crate) fn argmax_class(dist: &[f64]) -> u32 {
    let mut best = 0;
    for (c, &p) in dist.iter().enumerate() {
        if p > dist[best] {
            best = c;
        }
    }
    best as u32
}

/// Predict labels for `rows`. Codes index the model's class set, which must
/// match the rows' label dictionary when one is present.
pub fn predict(model: &Model, rows: &Dataset) -> Result<Predictions, ModelError> {
    let binding = Binding::resolve(model, rows)?;
    let labels = match &model.variant {
        ModelVariant::Majority { class } => vec![*class; rows.n_rows()],
        ModelVariant::PerfectOracle => {
            let label = rows.label().ok_or(ModelError::OracleNeedsLabels)?;
            (0..rows.n_rows())
                .map(|r| label.code(r).expect("label observed"))
                .collect()
        }
        ModelVariant::Cart { root, params } => (0..rows.n_rows())
            .map(|r| {
                cart::predict_row(
                    root,
                    params,
                    &binding,
                    rows,
                    r,
                    model.seed,
                    model.classes.len(),
                )
            })
            .collect(),
        ModelVariant::Logistic(m) => logistic::predict(m, &binding, rows)?,
        ModelVariant::NaiveBayes(m) => naive_bayes::predict(m, &binding, rows)?,
        ModelVariant::Forest {
            trees,
            params,
            tree_seeds,
        } => forest::predict(
            trees,
            &params.cart,
            tree_seeds,
            &binding,
            rows,
            model.classes.len(),
        )?,
    };
    Ok(Predictions { labels })
}

/// Normalised impurity-decrease totals per feature column. Only defined for
/// CART and forest models; unused columns report 0.
pub fn feature_importance(model: &Model) -> Result<BTreeMap<String, f64>, ModelError> {
    let mut raw = vec![0.0; model.features.len()];
    match &model.variant {
        ModelVariant::Cart { root, .. } => cart::accumulate_importance(root, &mut raw),
        ModelVariant::Forest { trees, .. } => {
            for t in trees {
                cart::accumulate_importance(t, &mut raw);
            }
        }
        _ => return Err(ModelError::NotATree),
    }
    let total: f64 = raw.iter().sum();
    let mut out = BTreeMap::new();
    for (meta, value) in model.features.iter().zip(raw) {
        out.insert(
            meta.name.clone(),
            if total > 0.0 { value / total } else { 0.0 },
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Column, Dataset};
    use crate::metrics::accuracy;

    pub(crate) fn separable_fixture(n: usize) -> Dataset {
        // x < threshold decides the class; one categorical echoes it.
        let x: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let cat: Vec<Option<&str>> = (0..n)
            .map(|i| Some(if i < n / 2 { "lo" } else { "hi" }))
            .collect();
        let y: Vec<Option<&str>> = (0..n)
            .map(|i| Some(if i < n / 2 { "neg" } else { "pos" }))
            .collect();
        Dataset::new(
            vec![
                Column::new_numeric("x", x, vec![false; n]),
                Column::from_strings("c", &cat),
                Column::from_strings("y", &y),
            ],
            Some("y"),
        )
        .unwrap()
    }

    #[test]
    fn majority_predicts_constant() {
        let d = separable_fixture(10);
        let m = fit(&d, &ModelSpec::Majority, 1).unwrap();
        let p = predict(&m, &d).unwrap();
        assert!(p.labels.iter().all(|&l| l == p.labels[0]));
    }

    #[test]
    fn majority_tie_breaks_to_first_class() {
        let y = Column::from_strings("y", &[Some("b"), Some("a"), Some("b"), Some("a")]);
        let x = Column::new_numeric("x", vec![1.0, 2.0, 3.0, 4.0], vec![false; 4]);
        let d = Dataset::new(vec![x, y], Some("y")).unwrap();
        let m = fit(&d, &ModelSpec::Majority, 0).unwrap();
        // Dictionary order: b first.
        assert!(matches!(m.variant, ModelVariant::Majority { class: 0 }));
    }

    #[test]
    fn perfect_oracle_returns_truth() {
        let d = separable_fixture(12);
        let m = fit(&d, &ModelSpec::Perfect, 9).unwrap();
        let p = predict(&m, &d).unwrap();
        assert_eq!(accuracy(&p, &d).unwrap(), 1.0);
    }

    #[test]
    fn single_class_training_degenerates() {
        let x = Column::new_numeric("x", vec![1.0, 2.0], vec![false, false]);
        let y = Column::from_strings("y", &[Some("only"), Some("only")]);
        let d = Dataset::new(vec![x, y], Some("y")).unwrap();
        for spec in [
            ModelSpec::Cart {
                params: CartParams::default(),
            },
            ModelSpec::NaiveBayes,
        ] {
            let m = fit(&d, &spec, 3).unwrap();
            assert!(m.single_class);
            assert!(matches!(m.variant, ModelVariant::Majority { .. }));
        }
    }

    #[test]
    fn mask_intolerant_variants_reject_missing() {
        let x = Column::new_numeric("x", vec![1.0, f64::NAN, 3.0], vec![false, true, false]);
        let z = Column::new_numeric("z", vec![0.0, 1.0, 0.0], vec![false; 3]);
        let y = Column::from_strings("y", &[Some("a"), Some("b"), Some("a")]);
        let d = Dataset::new(vec![x, z, y], Some("y")).unwrap();
        for spec in [
            ModelSpec::Logistic {
                params: LogisticParams::default(),
            },
            ModelSpec::NaiveBayes,
            ModelSpec::Forest {
                params: ForestParams::default(),
            },
        ] {
            assert!(
                matches!(
                    fit(&d, &spec, 0),
                    Err(ModelError::MissingValuesUnsupported(_))
                ),
                "spec {:?} accepted masks",
                spec
            );
        }
        // Mask-tolerant variants fit fine.
        for spec in [
            ModelSpec::Majority,
            ModelSpec::Perfect,
            ModelSpec::Cart {
                params: CartParams::default(),
            },
        ] {
            assert!(fit(&d, &spec, 0).is_ok());
        }
    }

    #[test]
    fn empty_training_set_is_an_error() {
        let x = Column::new_numeric("x", vec![], vec![]);
        let y = Column::from_strings("y", &[]);
        let d = Dataset::new(vec![x, y], Some("y")).unwrap();
        assert!(matches!(
            fit(&d, &ModelSpec::Majority, 0),
            Err(ModelError::EmptyTrainingSet)
        ));
    }

    #[test]
    fn model_json_round_trip() {
        let d = separable_fixture(30);
        let m = fit(
            &d,
            &ModelSpec::Cart {
                params: CartParams {
                    min_split: 2,
                    complexity: 0.0,
                    ..CartParams::default()
                },
            },
            5,
        )
        .unwrap();
        let json = serde_json::to_string(&m).unwrap();
        let back: Model = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
        let p1 = predict(&m, &d).unwrap();
        let p2 = predict(&back, &d).unwrap();
        assert_eq!(p1, p2);
    }

    #[test]
    fn fit_is_deterministic() {
        let d = separable_fixture(40);
        for spec in [
            ModelSpec::Cart {
                params: CartParams::default(),
            },
            ModelSpec::Logistic {
                params: LogisticParams::default(),
            },
            ModelSpec::NaiveBayes,
            ModelSpec::Forest {
                params: ForestParams {
                    n_trees: 5,
                    ..ForestParams::default()
                },
            },
        ] {
            let a = fit(&d, &spec, 123).unwrap();
            let b = fit(&d, &spec, 123).unwrap();
            assert_eq!(a, b);
            assert_eq!(predict(&a, &d).unwrap(), predict(&b, &d).unwrap());
        }
    }
}
