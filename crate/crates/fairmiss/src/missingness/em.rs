//! EM estimation of a multivariate normal under the observed-data likelihood.
//!
//! Rows are grouped by missingness pattern so each iteration factorises the
//! observed block of the covariance once per pattern. The log-likelihood is
//! evaluated under the parameters entering each iteration, so the recorded
//! trace is non-decreasing.

use nalgebra::{Cholesky, DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EmError {
    #[error("column {0} has no observed values")]
    AllMissingColumn(usize),
    #[error("need at least 2 columns, got {0}")]
    TooFewColumns(usize),
    #[error("covariance is singular even after ridge regularisation")]
    SingularCovariance,
    #[error("rows and mask have mismatched shapes")]
    ShapeMismatch,
}

/// EM stopping and regularisation parameters.
#[derive(Debug, Clone, Copy)]
pub struct EmParams {
    /// Relative log-likelihood change below which iteration stops.
    pub tol: f64,
    pub max_iter: usize,
    /// Ridge added on singularity, as a fraction of trace(cov)/p.
    pub ridge_scale: f64,
}

impl Default for EmParams {
    fn default() -> Self {
        EmParams {
            tol: 1e-6,
            max_iter: 500,
            ridge_scale: 1e-8,
        }
    }
}

/// Maximum-likelihood estimates from EM.
#[derive(Debug, Clone)]
pub struct EmFit {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    /// Observed-data log-likelihood under the returned parameters.
    pub loglik: f64,
    /// Number of M-step updates performed.
    pub iterations: usize,
    pub converged: bool,
    pub loglik_trace: Vec<f64>,
}

/// Distinct missingness patterns with their row indices.
pub(crate) fn group_patterns(mask: &[Vec<bool>]) -> Vec<(Vec<bool>, Vec<usize>)> {
    let mut map: std::collections::BTreeMap<Vec<bool>, Vec<usize>> = Default::default();
    for (i, m) in mask.iter().enumerate() {
        map.entry(m.clone()).or_default().push(i);
    }
    map.into_iter().collect()
}

struct PatternFactor {
    observed: Vec<usize>,
    missing: Vec<usize>,
    rows: Vec<usize>,
    chol: Option<Cholesky<f64, nalgebra::Dyn>>,
    log_det: f64,
    /// Regression of missing on observed: cov_mo * cov_oo^-1.
    coeff: DMatrix<f64>,
    /// Conditional covariance of the missing block.
    cond_cov: DMatrix<f64>,
}

fn submatrix(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

fn factorise(
    cov: &DMatrix<f64>,
    patterns: &[(Vec<bool>, Vec<usize>)],
) -> Option<Vec<PatternFactor>> {
    let p = cov.nrows();
    let mut out = Vec::with_capacity(patterns.len());
    for (mask, rows) in patterns {
        let observed: Vec<usize> = (0..p).filter(|&j| !mask[j]).collect();
        let missing: Vec<usize> = (0..p).filter(|&j| mask[j]).collect();
        if observed.is_empty() {
            // A fully missing row carries no information; its expectations are
            // the current parameters, handled separately in the E-step.
            out.push(PatternFactor {
                observed,
                missing,
                rows: rows.clone(),
                chol: None,
                log_det: 0.0,
                coeff: DMatrix::zeros(0, 0),
                cond_cov: DMatrix::zeros(0, 0),
            });
            continue;
        }
        let cov_oo = submatrix(cov, &observed, &observed);
        let chol = Cholesky::new(cov_oo)?;
        let log_det = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let (coeff, cond_cov) = if missing.is_empty() {
            (DMatrix::zeros(0, observed.len()), DMatrix::zeros(0, 0))
        } else {
            let cov_om = submatrix(cov, &observed, &missing);
            let solved = chol.solve(&cov_om); // cov_oo^-1 * cov_om
            let coeff = solved.transpose(); // cov_mo * cov_oo^-1
            let cov_mm = submatrix(cov, &missing, &missing);
            let cond = &cov_mm - &coeff * &cov_om;
            (coeff, cond)
        };
        out.push(PatternFactor {
            observed,
            missing,
            rows: rows.clone(),
            chol: Some(chol),
            log_det,
            coeff,
            cond_cov,
        });
    }
    Some(out)
}

/// One E-step: observed-data log-likelihood plus sufficient statistics.
fn e_step(
    data: &[Vec<f64>],
    factors: &[PatternFactor],
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    p: usize,
) -> (f64, DVector<f64>, DMatrix<f64>) {
    const LN_2PI: f64 = 1.837877066409345483560659472811235279723;
    let mut loglik = 0.0;
    let mut sum_x = DVector::zeros(p);
    let mut sum_xx = DMatrix::zeros(p, p);
    let mut filled = DVector::zeros(p);
    for f in factors {
        if f.observed.is_empty() {
            // E[x] = mean, E[xx'] = cov + mean mean'.
            for _ in &f.rows {
                sum_x += mean;
                sum_xx += cov + mean * mean.transpose();
            }
            continue;
        }
        let chol = f.chol.as_ref().expect("factorised");
        let p_o = f.observed.len();
        let mu_o = DVector::from_fn(p_o, |i, _| mean[f.observed[i]]);
        let mu_m = DVector::from_fn(f.missing.len(), |i, _| mean[f.missing[i]]);
        for &r in &f.rows {
            let x_o = DVector::from_fn(p_o, |i, _| data[r][f.observed[i]]);
            let delta = &x_o - &mu_o;
            let solved = chol.solve(&delta);
            let quad = delta.dot(&solved);
            loglik += -0.5 * (p_o as f64 * LN_2PI + f.log_det + quad);

            let x_m = &mu_m + &f.coeff * &delta;
            for (i, &j) in f.observed.iter().enumerate() {
                filled[j] = x_o[i];
            }
            for (i, &j) in f.missing.iter().enumerate() {
                filled[j] = x_m[i];
            }
            sum_x += &filled;
            sum_xx.syger(1.0, &filled, &filled, 1.0);
        }
        // Conditional covariance of the missing block, once per row.
        if !f.missing.is_empty() {
            let n_rows = f.rows.len() as f64;
            for (i, &ji) in f.missing.iter().enumerate() {
                for (k, &jk) in f.missing.iter().enumerate() {
                    sum_xx[(ji, jk)] += n_rows * f.cond_cov[(i, k)];
                }
            }
        }
    }
    // syger only writes the lower triangle; mirror it up.
    for i in 0..p {
        for j in (i + 1)..p {
            sum_xx[(i, j)] = sum_xx[(j, i)];
        }
    }
    (loglik, sum_x, sum_xx)
}

/// Fit a multivariate normal to incomplete data by EM.
///
/// `data` is row-major with arbitrary payloads at masked positions. The
/// covariance is the maximum-likelihood (1/n) estimate.
pub fn em_mvn_matrix(
    data: &[Vec<f64>],
    mask: &[Vec<bool>],
    params: &EmParams,
) -> Result<EmFit, EmError> {
    let n = data.len();
    if n == 0 || mask.len() != n {
        return Err(EmError::ShapeMismatch);
    }
    let p = data[0].len();
    if p < 2 {
        return Err(EmError::TooFewColumns(p));
    }
    if data.iter().any(|r| r.len() != p) || mask.iter().any(|r| r.len() != p) {
        return Err(EmError::ShapeMismatch);
    }

    // Initialise from available-case means and variances.
    let mut mean = DVector::zeros(p);
    let mut var = DVector::zeros(p);
    for j in 0..p {
        let observed: Vec<f64> = (0..n)
            .filter(|&i| !mask[i][j])
            .map(|i| data[i][j])
            .collect();
        if observed.is_empty() {
            return Err(EmError::AllMissingColumn(j));
        }
        let m = observed.iter().sum::<f64>() / observed.len() as f64;
        let v = observed.iter().map(|x| (x - m).powi(2)).sum::<f64>() / observed.len() as f64;
        mean[j] = m;
        var[j] = v;
    }
    let overall_var = var.iter().sum::<f64>() / p as f64;
    let floor = (overall_var * 1e-12).max(f64::MIN_POSITIVE);
    let mut cov = DMatrix::from_diagonal(&var.map(|v| v.max(floor)));

    let patterns = group_patterns(mask);
    let mut trace: Vec<f64> = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut loglik = f64::NEG_INFINITY;

    for _ in 0..params.max_iter {
        let factors = match factorise(&cov, &patterns) {
            Some(f) => f,
            None => {
                let ridge = params.ridge_scale * cov.trace() / p as f64;
                for j in 0..p {
                    cov[(j, j)] += ridge.max(f64::MIN_POSITIVE);
                }
                factorise(&cov, &patterns).ok_or(EmError::SingularCovariance)?
            }
        };
        let (ll, sum_x, sum_xx) = e_step(data, &factors, &mean, &cov, p);
        trace.push(ll);
        if iterations > 0 {
            let change = ll - loglik;
            if change.abs() <= params.tol * loglik.abs().max(1.0) {
                loglik = ll;
                converged = true;
                break;
            }
        }
        loglik = ll;

        let new_mean = &sum_x / n as f64;
        let mut new_cov = &sum_xx / n as f64 - &new_mean * new_mean.transpose();
        // Symmetrise against accumulation round-off.
        for i in 0..p {
            for j in (i + 1)..p {
                let s = 0.5 * (new_cov[(i, j)] + new_cov[(j, i)]);
                new_cov[(i, j)] = s;
                new_cov[(j, i)] = s;
            }
        }
        mean = new_mean;
        cov = new_cov;
        iterations += 1;
    }

    Ok(EmFit {
        mean,
        cov,
        loglik,
        iterations,
        converged,
        loglik_trace: trace,
    })
}
