//! Binary logistic regression on one-hot encoded features, fitted by batch
//! gradient descent with a Lipschitz step size.

use serde::{Deserialize, Serialize};

use super::{Binding, FeatureValue, ModelError};
use crate::dataset::{ColumnKind, Dataset};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    /// Stop when the gradient's max-norm falls below this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LogisticParams {
    fn default() -> Self {
        LogisticParams {
            tol: 1e-5,
            max_iter: 1000,
        }
    }
}

/// Fitted weights over the one-hot design plus standardisation constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Per model feature: offset of its first design column.
    pub feature_offsets: Vec<usize>,
    /// Standardisation for numeric features: (mean, sd).
    pub scalers: Vec<(f64, f64)>,
    pub iterations: usize,
    pub converged: bool,
}

/// Design-matrix width per feature: 1 for numeric, `k - 1` dummies for a
/// categorical with `k` categories (first category dropped).
fn feature_width(kind: ColumnKind, n_categories: usize) -> usize {
    match kind {
        ColumnKind::Numeric => 1,
        ColumnKind::Categorical => n_categories.saturating_sub(1),
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean negative log-likelihood of `(x, y)` rows under (weights, bias).
pub(crate) fn nll(design: &[Vec<f64>], targets: &[f64], weights: &[f64], bias: f64) -> f64 {
    let n = design.len() as f64;
    let mut total = 0.0;
    for (x, &y) in design.iter().zip(targets) {
        let z = bias + x.iter().zip(weights).map(|(a, w)| a * w).sum::<f64>();
        // log(1 + exp(z)) - y z, computed stably.
        let log1p_exp = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
        total += log1p_exp - y * z;
    }
    total / n
}

/// Gradient of [`nll`] in (weights, bias).
pub(crate) fn nll_gradient(
    design: &[Vec<f64>],
    targets: &[f64],
    weights: &[f64],
    bias: f64,
) -> (Vec<f64>, f64) {
    let n = design.len() as f64;
    let mut grad_w = vec![0.0; weights.len()];
    let mut grad_b = 0.0;
    for (x, &y) in design.iter().zip(targets) {
        let z = bias + x.iter().zip(weights).map(|(a, w)| a * w).sum::<f64>();
        let err = sigmoid(z) - y;
        for (g, a) in grad_w.iter_mut().zip(x) {
            *g += err * a;
        }
        grad_b += err;
    }
    for g in &mut grad_w {
        *g /= n;
    }
    (grad_w, grad_b / n)
}

struct Encoder {
    offsets: Vec<usize>,
    scalers: Vec<(f64, f64)>,
    width: usize,
}

fn build_encoder(train: &Dataset) -> Encoder {
    let mut offsets = Vec::new();
    let mut scalers = Vec::new();
    let mut width = 0;
    for i in train.feature_indices() {
        let col = &train.columns()[i];
        offsets.push(width);
        width += feature_width(col.kind(), col.categories().map_or(0, <[String]>::len));
        let scaler = if col.kind() == ColumnKind::Numeric {
            let values: Vec<f64> = (0..col.len()).filter_map(|r| col.numeric(r)).collect();
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            (mean, var.sqrt())
        } else {
            (0.0, 0.0)
        };
        scalers.push(scaler);
    }
    Encoder {
        offsets,
        scalers,
        width,
    }
}

/// Fill one design row. Unseen categories (index -1 at prediction time)
/// encode as all-zero dummies, the same as the dropped first category.
fn encode_row(
    model: &LogisticModel,
    binding: &Binding,
    rows: &Dataset,
    r: usize,
    out: &mut [f64],
) -> Result<(), ModelError> {
    out.fill(0.0);
    for f in 0..binding.cols.len() {
        match binding.value(rows, f, r) {
            FeatureValue::Missing => {
                return Err(ModelError::MissingValuesUnsupported("logistic"))
            }
            FeatureValue::Numeric(x) => {
                let (mean, sd) = model.scalers[f];
                out[model.feature_offsets[f]] = if sd > 0.0 { (x - mean) / sd } else { 0.0 };
            }
            FeatureValue::Category(c) => {
                if c > 0 {
                    out[model.feature_offsets[f] + (c as usize - 1)] = 1.0;
                }
            }
        }
    }
    Ok(())
}

pub(crate) fn fit(
    train: &Dataset,
    params: &LogisticParams,
    classes: &[String],
) -> Result<LogisticModel, ModelError> {
    if classes.len() != 2 {
        return Err(ModelError::MulticlassUnsupported(classes.len()));
    }
    let encoder = build_encoder(train);
    let mut model = LogisticModel {
        weights: vec![0.0; encoder.width],
        bias: 0.0,
        feature_offsets: encoder.offsets,
        scalers: encoder.scalers,
        iterations: 0,
        converged: false,
    };
    // Materialise the design once; identity binding against the train set.
    let binding = Binding {
        cols: train.feature_indices(),
        cat_maps: train
            .feature_indices()
            .iter()
            .map(|&i| {
                let k = train.columns()[i].categories().map_or(0, <[String]>::len);
                (0..k as i64).collect()
            })
            .collect(),
    };
    let label = train.label().expect("label checked by caller");
    let mut design = vec![vec![0.0; encoder.width]; train.n_rows()];
    let mut targets = vec![0.0; train.n_rows()];
    for r in 0..train.n_rows() {
        encode_row(&model, &binding, train, r, &mut design[r])?;
        targets[r] = f64::from(label.code(r).expect("label observed") == 1);
    }

    // Step from the logistic Hessian bound: H <= max_r ||x_r||^2 / 4.
    let max_sq_norm = design
        .iter()
        .map(|x| 1.0 + x.iter().map(|v| v * v).sum::<f64>())
        .fold(1.0, f64::max);
    let step = 4.0 / max_sq_norm;

    for it in 1..=params.max_iter {
        let (grad_w, grad_b) = nll_gradient(&design, &targets, &model.weights, model.bias);
        let grad_max = grad_w
            .iter()
            .chain(std::iter::once(&grad_b))
            .fold(0.0f64, |m, g| m.max(g.abs()));
        model.iterations = it;
        if grad_max < params.tol {
            model.converged = true;
            break;
        }
        for (w, g) in model.weights.iter_mut().zip(&grad_w) {
            *w -= step * g;
        }
        model.bias -= step * grad_b;
    }
    Ok(model)
}

pub(crate) fn predict(
    model: &LogisticModel,
    binding: &Binding,
    rows: &Dataset,
) -> Result<Vec<u32>, ModelError> {
    let mut x = vec![0.0; model.weights.len()];
    let mut out = Vec::with_capacity(rows.n_rows());
    for r in 0..rows.n_rows() {
        encode_row(model, binding, rows, r, &mut x)?;
        let z = model.bias + x.iter().zip(&model.weights).map(|(a, w)| a * w).sum::<f64>();
        out.push(u32::from(z > 0.0));
    }
    Ok(out)
}
