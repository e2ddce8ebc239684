//! Naive Bayes with Gaussian conditionals for numeric features and
//! Laplace-smoothed categorical conditionals.

use serde::{Deserialize, Serialize};

use super::{argmax_class, Binding, FeatureValue, ModelError};
use crate::dataset::{ColumnKind, Dataset};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NbModel {
    pub log_priors: Vec<f64>,
    /// Per feature, per class: the fitted conditional.
    pub conditionals: Vec<Vec<FeatureConditional>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case")]
pub enum FeatureConditional {
    Gaussian { mean: f64, var: f64 },
    /// Laplace-smoothed log-probabilities per category, plus the value used
    /// for categories unseen at training time.
    Categorical { log_probs: Vec<f64>, log_unseen: f64 },
}

pub(crate) fn fit(train: &Dataset, classes: &[String]) -> NbModel {
    let label = train.label().expect("label checked by caller");
    let n = train.n_rows();
    let k = classes.len();
    let codes: Vec<usize> = (0..n)
        .map(|r| label.code(r).expect("label observed") as usize)
        .collect();
    let mut class_n = vec![0usize; k];
    for &c in &codes {
        class_n[c] += 1;
    }
    let log_priors: Vec<f64> = class_n
        .iter()
        .map(|&c| ((c as f64).max(f64::MIN_POSITIVE) / n as f64).ln())
        .collect();

    let mut conditionals = Vec::new();
    for i in train.feature_indices() {
        let col = &train.columns()[i];
        let mut per_class = Vec::with_capacity(k);
        match col.kind() {
            ColumnKind::Numeric => {
                // Pooled variance sets the floor so a constant-within-class
                // feature cannot produce an infinite density.
                let all: Vec<f64> = (0..n).filter_map(|r| col.numeric(r)).collect();
                let pool_mean = all.iter().sum::<f64>() / all.len() as f64;
                let pool_var =
                    all.iter().map(|v| (v - pool_mean).powi(2)).sum::<f64>() / all.len() as f64;
                let floor = (pool_var * 1e-9).max(1e-12);
                for c in 0..k {
                    let values: Vec<f64> = (0..n)
                        .filter(|&r| codes[r] == c)
                        .map(|r| col.numeric(r).expect("complete data"))
                        .collect();
                    if values.is_empty() {
                        per_class.push(FeatureConditional::Gaussian {
                            mean: pool_mean,
                            var: pool_var.max(floor),
                        });
                        continue;
                    }
                    let mean = values.iter().sum::<f64>() / values.len() as f64;
                    let var =
                        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / values.len() as f64;
                    per_class.push(FeatureConditional::Gaussian {
                        mean,
                        var: var.max(floor),
                    });
                }
            }
            ColumnKind::Categorical => {
                let cats = col.categories().map_or(0, <[String]>::len);
                for c in 0..k {
                    let mut counts = vec![0usize; cats];
                    let mut total = 0usize;
                    for r in 0..n {
                        if codes[r] == c {
                            counts[col.code(r).expect("complete data") as usize] += 1;
                            total += 1;
                        }
                    }
                    let denom = (total + cats + 1) as f64;
                    per_class.push(FeatureConditional::Categorical {
                        log_probs: counts
                            .iter()
                            .map(|&c| ((c + 1) as f64 / denom).ln())
                            .collect(),
                        log_unseen: (1.0 / denom).ln(),
                    });
                }
            }
        }
        conditionals.push(per_class);
    }
    NbModel {
        log_priors,
        conditionals,
    }
}

fn gaussian_log_pdf(x: f64, mean: f64, var: f64) -> f64 {
    const LN_2PI: f64 = 1.837877066409345483560659472811235279723;
    -0.5 * (LN_2PI + var.ln() + (x - mean) * (x - mean) / var)
}

pub(crate) fn predict(
    model: &NbModel,
    binding: &Binding,
    rows: &Dataset,
) -> Result<Vec<u32>, ModelError> {
    let k = model.log_priors.len();
    let mut out = Vec::with_capacity(rows.n_rows());
    for r in 0..rows.n_rows() {
        let mut scores = model.log_priors.clone();
        for (f, per_class) in model.conditionals.iter().enumerate() {
            let value = binding.value(rows, f, r);
            if matches!(value, FeatureValue::Missing) {
                return Err(ModelError::MissingValuesUnsupported("naive_bayes"));
            }
            for c in 0..k {
                scores[c] += match (&per_class[c], &value) {
                    (FeatureConditional::Gaussian { mean, var }, FeatureValue::Numeric(x)) => {
                        gaussian_log_pdf(*x, *mean, *var)
                    }
                    (
                        FeatureConditional::Categorical { log_probs, log_unseen },
                        FeatureValue::Category(code),
                    ) => {
                        if *code >= 0 {
                            log_probs[*code as usize]
                        } else {
                            *log_unseen
                        }
                    }
                    _ => {
                        return Err(ModelError::SchemaMismatch(
                            "feature kind changed between fit and predict".into(),
                        ))
                    }
                };
            }
        }
        out.push(argmax_class(&scores));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Column, Dataset};
    use crate::metrics::accuracy;
    use crate::models::{fit as fit_model, predict as predict_model, ModelSpec};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn separates_well_spread_gaussians() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n = 300;
        let mut x = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let positive = rng.gen_bool(0.5);
            let center = if positive { 4.0 } else { -4.0 };
            x.push(center + rng.gen_range(-1.0..1.0));
            y.push(Some(if positive { "pos" } else { "neg" }));
        }
        let d = Dataset::new(
            vec![
                Column::new_numeric("x", x, vec![false; n]),
                Column::from_strings("y", &y),
            ],
            Some("y"),
        )
        .unwrap();
        let m = fit_model(&d, &ModelSpec::NaiveBayes, 0).unwrap();
        let p = predict_model(&m, &d).unwrap();
        assert!(accuracy(&p, &d).unwrap() > 0.99);
    }

    #[test]
    fn categorical_conditionals_apply_laplace_smoothing() {
        let c = Column::from_strings(
            "c",
            &[Some("u"), Some("u"), Some("v"), Some("v"), Some("w"), Some("u")],
        );
        let y = Column::from_strings(
            "y",
            &[Some("a"), Some("a"), Some("b"), Some("b"), Some("b"), Some("a")],
        );
        let d = Dataset::new(vec![c, y], Some("y")).unwrap();
        let m = fit_model(&d, &ModelSpec::NaiveBayes, 0).unwrap();
        let crate::models::ModelVariant::NaiveBayes(nb) = &m.variant else {
            unreachable!()
        };
        // Class a: 3 rows, all u; smoothing gives (3+1)/(3+4) for u.
        let FeatureConditional::Categorical { log_probs, .. } = &nb.conditionals[0][0] else {
            panic!("expected categorical conditional")
        };
        assert!((log_probs[0].exp() - 4.0 / 7.0).abs() < 1e-12);
        // Class probabilities are well-formed for v under class a too.
        assert!((log_probs[1].exp() - 1.0 / 7.0).abs() < 1e-12);
        let p = predict_model(&m, &d).unwrap();
        assert_eq!(accuracy(&p, &d).unwrap(), 1.0);
    }

    #[test]
    fn constant_feature_does_not_blow_up() {
        let x = Column::new_numeric("x", vec![1.0; 10], vec![false; 10]);
        let z = Column::new_numeric("z", (0..10).map(f64::from).collect(), vec![false; 10]);
        let y = Column::from_strings(
            "y",
            &(0..10).map(|i| Some(if i < 5 { "a" } else { "b" })).collect::<Vec<_>>(),
        );
        let d = Dataset::new(vec![x, z, y], Some("y")).unwrap();
        let m = fit_model(&d, &ModelSpec::NaiveBayes, 0).unwrap();
        let p = predict_model(&m, &d).unwrap();
        assert_eq!(accuracy(&p, &d).unwrap(), 1.0);
    }
}
