//! Missingness diagnostics: per-column fractions, pattern aggregation,
//! indicator correlations against the protected group and the favourable
//! class, and a global chi-square test of the missing-completely-at-random
//! hypothesis driven by EM estimates of a multivariate normal.

mod em;

pub use em::{em_mvn_matrix, EmError, EmFit, EmParams};

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_ur;
use thiserror::Error;

use crate::dataset::{ColumnKind, Dataset, GroupView};

#[derive(Debug, Error)]
pub enum McarError {
    #[error("the test is undefined on data without missing values")]
    NoMissingValues,
    #[error("no usable missingness pattern remains (dof would be {0})")]
    InsufficientPatterns(i64),
    #[error(transparent)]
    Em(#[from] EmError),
}

/// How categorical columns enter the numeric encoding used by the EM and
/// MCAR machinery.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    /// Integer codes in lexicographic category order. Default.
    IntegerCodes,
    /// One dummy per category beyond the lexicographically first.
    OneHot,
}

/// Fraction of masked cells per column, in column order.
pub fn missing_fraction_per_column(d: &Dataset) -> Vec<(String, f64)> {
    d.columns()
        .iter()
        .map(|c| {
            let frac = if d.n_rows() == 0 {
                0.0
            } else {
                c.n_missing() as f64 / d.n_rows() as f64
            };
            (c.name().to_string(), frac)
        })
        .collect()
}

/// One distinct missingness pattern: a flag per column-with-missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternRow {
    pub pattern: Vec<bool>,
    pub count: usize,
    pub fraction: f64,
}

/// Aggregation of all distinct missingness patterns over the columns that
/// contain at least one masked cell, sorted by descending count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternTable {
    /// Names of the columns the pattern flags refer to.
    pub columns: Vec<String>,
    pub rows: Vec<PatternRow>,
}

pub fn pattern_table(d: &Dataset) -> PatternTable {
    let cols: Vec<usize> = (0..d.n_cols())
        .filter(|&i| d.columns()[i].n_missing() > 0)
        .collect();
    let names: Vec<String> = cols
        .iter()
        .map(|&i| d.columns()[i].name().to_string())
        .collect();
    let mut counts: std::collections::BTreeMap<Vec<bool>, usize> = Default::default();
    for r in 0..d.n_rows() {
        let pattern: Vec<bool> = cols.iter().map(|&c| d.columns()[c].is_missing(r)).collect();
        *counts.entry(pattern).or_insert(0) += 1;
    }
    let n = d.n_rows().max(1);
    let mut rows: Vec<PatternRow> = counts
        .into_iter()
        .map(|(pattern, count)| PatternRow {
            pattern,
            count,
            fraction: count as f64 / n as f64,
        })
        .collect();
    rows.sort_by(|a, b| b.count.cmp(&a.count).then(a.pattern.cmp(&b.pattern)));
    PatternTable {
        columns: names,
        rows,
    }
}

/// Pearson correlations between the 0/1 missingness indicator of every
/// column-with-missing, the 0/1 privileged-group indicator, and the 0/1
/// favourable-class indicator. Entries involving a constant indicator are
/// `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub labels: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
}

pub fn missingness_correlations(d: &Dataset, g: &GroupView) -> CorrelationMatrix {
    let mut labels = Vec::new();
    let mut indicators: Vec<Vec<f64>> = Vec::new();
    for c in d.columns() {
        if c.n_missing() > 0 {
            labels.push(format!("missing:{}", c.name()));
            indicators.push(
                c.missing_mask()
                    .iter()
                    .map(|&m| if m { 1.0 } else { 0.0 })
                    .collect(),
            );
        }
    }
    labels.push("privileged".to_string());
    indicators.push(
        (0..d.n_rows())
            .map(|r| if g.is_privileged(r) { 1.0 } else { 0.0 })
            .collect(),
    );
    labels.push("favourable".to_string());
    let label_col = d.label().expect("group view implies a label");
    indicators.push(
        (0..d.n_rows())
            .map(|r| {
                if label_col.code(r) == Some(g.favourable_code()) {
                    1.0
                } else {
                    0.0
                }
            })
            .collect(),
    );

    let k = indicators.len();
    let mut values = vec![vec![None; k]; k];
    for i in 0..k {
        for j in i..k {
            let r = pearson(&indicators[i], &indicators[j]);
            values[i][j] = r;
            values[j][i] = r;
        }
    }
    CorrelationMatrix { labels, values }
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    if x.is_empty() {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
        sxy += (a - mx) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None; // constant indicator: correlation undefined
    }
    if std::ptr::eq(x, y) {
        return Some(1.0);
    }
    Some(sxy / (sxx.sqrt() * syy.sqrt()))
}

/// Encode a dataset as a numeric matrix with a missing mask. All columns
/// participate, including the label.
pub(crate) fn encode(d: &Dataset, encoding: Encoding) -> (Vec<Vec<f64>>, Vec<Vec<bool>>) {
    let n = d.n_rows();
    let mut cols: Vec<(Vec<f64>, Vec<bool>)> = Vec::new();
    for c in d.columns() {
        match c.kind() {
            ColumnKind::Numeric => {
                let values = (0..n).map(|r| c.numeric(r).unwrap_or(0.0)).collect();
                cols.push((values, c.missing_mask().to_vec()));
            }
            ColumnKind::Categorical => {
                let categories = c.categories().expect("categorical");
                // Lexicographic rank per category code.
                let mut order: Vec<usize> = (0..categories.len()).collect();
                order.sort_by(|&a, &b| categories[a].cmp(&categories[b]));
                let mut rank = vec![0usize; categories.len()];
                for (r, &code) in order.iter().enumerate() {
                    rank[code] = r;
                }
                match encoding {
                    Encoding::IntegerCodes => {
                        let values = (0..n)
                            .map(|r| c.code(r).map_or(0.0, |code| rank[code as usize] as f64))
                            .collect();
                        cols.push((values, c.missing_mask().to_vec()));
                    }
                    Encoding::OneHot => {
                        // One dummy per category except the lexicographically
                        // first; a masked cell masks the whole block.
                        for target in 1..categories.len() {
                            let values = (0..n)
                                .map(|r| {
                                    c.code(r).map_or(0.0, |code| {
                                        if rank[code as usize] == target {
                                            1.0
                                        } else {
                                            0.0
                                        }
                                    })
                                })
                                .collect();
                            cols.push((values, c.missing_mask().to_vec()));
                        }
                    }
                }
            }
        }
    }
    let p = cols.len();
    let mut data = vec![vec![0.0; p]; n];
    let mut mask = vec![vec![false; p]; n];
    for (j, (values, miss)) in cols.into_iter().enumerate() {
        for r in 0..n {
            data[r][j] = values[r];
            mask[r][j] = miss[r];
        }
    }
    (data, mask)
}

/// EM fit of a multivariate normal to the encoded dataset.
pub fn em_mvn(d: &Dataset, encoding: Encoding, params: &EmParams) -> Result<EmFit, EmError> {
    let (data, mask) = encode(d, encoding);
    em_mvn_matrix(&data, &mask, params)
}

/// Result of the global MCAR chi-square test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McarTestResult {
    /// The chi-square statistic (often written d^2).
    pub statistic: f64,
    pub dof: u64,
    pub p_value: f64,
    /// Patterns included in the statistic.
    pub n_patterns: usize,
    /// Patterns dropped for having fewer than two rows or a numerically
    /// singular restricted covariance.
    pub dropped_patterns: usize,
    pub em_iterations: usize,
    pub em_converged: bool,
}

/// Little's global test of the MCAR hypothesis.
///
/// Sums, over missingness patterns, the Mahalanobis distance between each
/// pattern's observed-variable means and the EM maximum-likelihood estimates,
/// scaled by the pattern size. Under MCAR the statistic is asymptotically
/// chi-square with `sum(p_j) - p` degrees of freedom.
pub fn little_mcar_test(d: &Dataset, encoding: Encoding) -> Result<McarTestResult, McarError> {
    little_mcar_test_with(d, encoding, &EmParams::default())
}

pub fn little_mcar_test_with(
    d: &Dataset,
    encoding: Encoding,
    params: &EmParams,
) -> Result<McarTestResult, McarError> {
    let (data, mask) = encode(d, encoding);
    little_mcar_test_matrix(&data, &mask, params)
}

/// Matrix-level MCAR test; see [`little_mcar_test`].
pub fn little_mcar_test_matrix(
    data: &[Vec<f64>],
    mask: &[Vec<bool>],
    params: &EmParams,
) -> Result<McarTestResult, McarError> {
    if mask.iter().all(|row| row.iter().all(|&m| !m)) {
        return Err(McarError::NoMissingValues);
    }
    let p = data.first().map_or(0, Vec::len);
    let fit = em_mvn_matrix(data, mask, params)?;

    let patterns = em::group_patterns(mask);
    let mut statistic = 0.0;
    let mut sum_pj: i64 = 0;
    let mut included = 0usize;
    let mut dropped = 0usize;
    for (pattern, rows) in &patterns {
        let observed: Vec<usize> = (0..p).filter(|&j| !pattern[j]).collect();
        if rows.len() < 2 || observed.is_empty() {
            dropped += 1;
            continue;
        }
        let n_j = rows.len() as f64;
        let mut delta = nalgebra::DVector::zeros(observed.len());
        for (i, &j) in observed.iter().enumerate() {
            let mean_obs = rows.iter().map(|&r| data[r][j]).sum::<f64>() / n_j;
            delta[i] = mean_obs - fit.mean[j];
        }
        let cov_oo = nalgebra::DMatrix::from_fn(observed.len(), observed.len(), |a, b| {
            fit.cov[(observed[a], observed[b])]
        });
        let Some(chol) = nalgebra::Cholesky::new(cov_oo) else {
            dropped += 1;
            continue;
        };
        let solved = chol.solve(&delta);
        statistic += n_j * delta.dot(&solved);
        sum_pj += observed.len() as i64;
        included += 1;
    }

    let dof = sum_pj - p as i64;
    if included == 0 || dof < 1 {
        return Err(McarError::InsufficientPatterns(dof));
    }
    let p_value = chi_square_upper_tail(statistic, dof as f64);
    Ok(McarTestResult {
        statistic,
        dof: dof as u64,
        p_value,
        n_patterns: included,
        dropped_patterns: dropped,
        em_iterations: fit.iterations,
        em_converged: fit.converged,
    })
}

/// Upper tail of the chi-square distribution via the regularised upper
/// incomplete gamma function.
pub fn chi_square_upper_tail(statistic: f64, dof: f64) -> f64 {
    if statistic <= 0.0 {
        return 1.0;
    }
    gamma_ur(dof / 2.0, statistic / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Column, Dataset, GroupSpec};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn masked_fixture() -> Dataset {
        // Columns a and b carry masks; pattern multiset over (a,b):
        // {10}x2, {01}x1, {11}x1, {00}x2.
        let a = Column::new_numeric(
            "a",
            vec![f64::NAN, 2.0, f64::NAN, f64::NAN, 5.0, 6.0],
            vec![true, false, true, true, false, false],
        );
        let b = Column::new_numeric(
            "b",
            vec![1.0, f64::NAN, 3.0, f64::NAN, 5.0, 6.0],
            vec![false, true, false, true, false, false],
        );
        let y = Column::from_strings(
            "y",
            &[Some("p"), Some("n"), Some("p"), Some("n"), Some("p"), Some("n")],
        );
        Dataset::new(vec![a, b, y], Some("y")).unwrap()
    }

    #[test]
    fn fractions_per_column() {
        let d = masked_fixture();
        let fractions = missing_fraction_per_column(&d);
        let get = |name: &str| fractions.iter().find(|(n, _)| n == name).unwrap().1;
        assert!((get("a") - 0.5).abs() < 1e-15);
        assert!((get("b") - 2.0 / 6.0).abs() < 1e-15);
        assert_eq!(get("y"), 0.0);
    }

    #[test]
    fn fractions_direct_count() {
        // 10 rows, 3 masked in one column -> 0.3.
        let x = Column::new_numeric(
            "x",
            (0..10).map(f64::from).collect(),
            (0..10).map(|i| i < 3).collect(),
        );
        let d = Dataset::new(vec![x], None).unwrap();
        assert!((missing_fraction_per_column(&d)[0].1 - 0.3).abs() < 1e-15);
    }

    #[test]
    fn pattern_table_enumerates_fixture() {
        let d = masked_fixture();
        let t = pattern_table(&d);
        assert_eq!(t.columns, vec!["a".to_string(), "b".to_string()]);
        let get = |pattern: &[bool]| t.rows.iter().find(|r| r.pattern == pattern).unwrap().count;
        assert_eq!(get(&[true, false]), 2);
        assert_eq!(get(&[false, true]), 1);
        assert_eq!(get(&[true, true]), 1);
        assert_eq!(get(&[false, false]), 2);
        let total: usize = t.rows.iter().map(|r| r.count).sum();
        assert_eq!(total, d.n_rows());
        let frac_sum: f64 = t.rows.iter().map(|r| r.fraction).sum();
        assert!((frac_sum - 1.0).abs() < 1e-12);
        // Sorted by descending count.
        for w in t.rows.windows(2) {
            assert!(w[0].count >= w[1].count);
        }
    }

    #[test]
    fn pattern_table_on_complete_data() {
        let x = Column::new_numeric("x", vec![1.0, 2.0], vec![false, false]);
        let d = Dataset::new(vec![x], None).unwrap();
        let t = pattern_table(&d);
        assert!(t.columns.is_empty());
        assert_eq!(t.rows.len(), 1);
        assert_eq!(t.rows[0].count, 2);
        assert!((t.rows[0].fraction - 1.0).abs() < 1e-15);
    }

    #[test]
    fn correlation_of_engineered_missingness() {
        // Missingness exactly equals unprivileged membership -> r = -1
        // against the privileged indicator.
        let groups = &[Some("a"), Some("a"), Some("b"), Some("b"), Some("a"), Some("b")];
        let g = Column::from_strings("g", groups);
        let x = Column::new_numeric(
            "x",
            vec![1.0, 2.0, f64::NAN, f64::NAN, 5.0, f64::NAN],
            groups.iter().map(|v| v == &Some("b")).collect(),
        );
        let y = Column::from_strings(
            "y",
            &[Some("p"), Some("n"), Some("p"), Some("n"), Some("p"), Some("n")],
        );
        let d = Dataset::new(vec![g, x, y], Some("y")).unwrap();
        let view = GroupSpec::new("g", vec!["a".into()], "p").resolve(&d).unwrap();
        let m = missingness_correlations(&d, &view);
        let mi = m.labels.iter().position(|l| l == "missing:x").unwrap();
        let pi = m.labels.iter().position(|l| l == "privileged").unwrap();
        let r = m.values[mi][pi].unwrap();
        assert!((r + 1.0).abs() < 1e-12, "r = {r}");
        // Diagonal is exactly 1 and the matrix is symmetric.
        for i in 0..m.labels.len() {
            assert_eq!(m.values[i][i], Some(1.0));
            for j in 0..m.labels.len() {
                assert_eq!(m.values[i][j], m.values[j][i]);
            }
        }
    }

    #[test]
    fn constant_indicator_is_undefined_not_fatal() {
        // Single-label dataset: the favourable indicator is constant.
        let g = Column::from_strings("g", &[Some("a"), Some("b"), Some("a"), Some("b")]);
        let x = Column::new_numeric(
            "x",
            vec![1.0, f64::NAN, 3.0, 4.0],
            vec![false, true, false, false],
        );
        let y = Column::from_strings("y", &[Some("p"), Some("p"), Some("p"), Some("p")]);
        let d = Dataset::new(vec![g, x, y], Some("y")).unwrap();
        let view = GroupSpec::new("g", vec!["a".into()], "p").resolve(&d).unwrap();
        let m = missingness_correlations(&d, &view);
        let fi = m.labels.iter().position(|l| l == "favourable").unwrap();
        let pi = m.labels.iter().position(|l| l == "privileged").unwrap();
        assert_eq!(m.values[fi][pi], None);
        assert_eq!(m.values[fi][fi], None);
        assert_eq!(m.values[pi][pi], Some(1.0));
    }

    #[test]
    fn integer_encoding_uses_lexicographic_ranks() {
        let c = Column::from_strings("c", &[Some("zeta"), Some("alpha"), Some("mid"), None]);
        let x = Column::new_numeric("x", vec![7.0, 8.0, 9.0, 10.0], vec![false; 4]);
        let d = Dataset::new(vec![c, x], None).unwrap();
        let (data, mask) = encode(&d, Encoding::IntegerCodes);
        // alpha=0, mid=1, zeta=2.
        assert_eq!(data[0][0], 2.0);
        assert_eq!(data[1][0], 0.0);
        assert_eq!(data[2][0], 1.0);
        assert!(mask[3][0]);
        assert_eq!(data[0][1], 7.0);
    }

    #[test]
    fn one_hot_encoding_drops_first_category() {
        let c = Column::from_strings("c", &[Some("b"), Some("a"), Some("c"), None]);
        let x = Column::new_numeric("x", vec![1.0, 2.0, 3.0, 4.0], vec![false; 4]);
        let d = Dataset::new(vec![c, x], None).unwrap();
        let (data, mask) = encode(&d, Encoding::OneHot);
        // Dummies for b and c (a dropped): row0 = (1,0), row1 = (0,0), row2 = (0,1).
        assert_eq!(data[0][..2], [1.0, 0.0]);
        assert_eq!(data[1][..2], [0.0, 0.0]);
        assert_eq!(data[2][..2], [0.0, 1.0]);
        assert!(mask[3][0] && mask[3][1]);
        assert_eq!(data.first().unwrap().len(), 3);
    }

    #[test]
    fn mcar_test_rejects_complete_data() {
        let x = Column::new_numeric("x", vec![1.0, 2.0], vec![false, false]);
        let z = Column::new_numeric("z", vec![3.0, 4.0], vec![false, false]);
        let d = Dataset::new(vec![x, z], None).unwrap();
        assert!(matches!(
            little_mcar_test(&d, Encoding::IntegerCodes),
            Err(McarError::NoMissingValues)
        ));
    }

    fn synthetic_mcar(seed: u64, n: usize, p: usize, rate: f64) -> (Vec<Vec<f64>>, Vec<Vec<bool>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = |rng: &mut ChaCha8Rng| {
            let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        };
        let mut data = Vec::with_capacity(n);
        let mut mask = Vec::with_capacity(n);
        for _ in 0..n {
            // Correlated columns via a shared factor.
            let f = normal(&mut rng);
            let row: Vec<f64> = (0..p)
                .map(|j| 0.6 * f + normal(&mut rng) + j as f64)
                .collect();
            data.push(row);
            mask.push((0..p).map(|_| rng.gen_bool(rate)).collect());
        }
        (data, mask)
    }

    #[test]
    fn mcar_test_is_roughly_calibrated() {
        // Smoke-sized calibration check; the acceptance suite runs 200 trials.
        let mut rejections = 0;
        let trials = 30;
        for t in 0..trials {
            let (data, mask) = synthetic_mcar(1000 + t, 600, 4, 0.1);
            let result =
                little_mcar_test_matrix(&data, &mask, &EmParams::default()).unwrap();
            assert!(result.em_converged);
            if result.p_value < 0.05 {
                rejections += 1;
            }
        }
        assert!(
            rejections <= 5,
            "size badly off: {rejections}/{trials} rejections at alpha = 0.05"
        );
    }

    #[test]
    fn mcar_test_detects_gross_mar() {
        // Mask the second column exactly when the first is above its mean:
        // strongly not MCAR.
        let (mut data, mut mask) = synthetic_mcar(77, 800, 3, 0.0);
        for i in 0..data.len() {
            mask[i][1] = data[i][0] > 0.0;
            if mask[i][1] {
                data[i][1] = 0.0;
            }
        }
        let result = little_mcar_test_matrix(&data, &mask, &EmParams::default()).unwrap();
        assert!(result.p_value < 1e-6, "p = {}", result.p_value);
    }

    #[test]
    fn statistic_is_scale_equivariant() {
        // The identity holds at the exact MLE, so run EM to tight convergence
        // to keep stopping error out of the comparison.
        let tight = EmParams {
            tol: 1e-13,
            max_iter: 10_000,
            ..EmParams::default()
        };
        let (mut data, mask) = synthetic_mcar(5, 400, 4, 0.12);
        let before = little_mcar_test_matrix(&data, &mask, &tight).unwrap();
        // Affine-rescale one column.
        for row in &mut data {
            row[2] = 1000.0 * row[2] - 37.0;
        }
        let after = little_mcar_test_matrix(&data, &mask, &tight).unwrap();
        let rel = (before.statistic - after.statistic).abs() / before.statistic.abs();
        assert!(rel < 1e-6, "relative change {rel}");
        assert_eq!(before.dof, after.dof);
    }

    #[test]
    fn chi_square_tail_matches_known_values() {
        // dof = 2: upper tail is exp(-x/2) exactly.
        for x in [0.1, 1.0, 3.0, 10.0, 40.0] {
            let q = chi_square_upper_tail(x, 2.0);
            let exact = (-x / 2.0f64).exp();
            assert!(((q - exact) / exact).abs() < 1e-12);
        }
        // dof = 1 at the familiar 5% quantile.
        let q = chi_square_upper_tail(3.841458820694124, 1.0);
        assert!((q - 0.05).abs() < 1e-10);
        assert_eq!(chi_square_upper_tail(0.0, 5.0), 1.0);
    }

    #[test]
    fn dof_accounts_for_dropped_patterns() {
        let d = masked_fixture();
        // Patterns {10} (2 rows), {00} (2 rows) are kept; {01} and {11}
        // have one row each and are dropped.
        let result = little_mcar_test(&d, Encoding::IntegerCodes).unwrap();
        assert_eq!(result.dropped_patterns, 2);
        assert_eq!(result.n_patterns, 2);
        // Kept: p_j = 2 ({10}: b,y observed) and 3 ({00}) with p = 3.
        assert_eq!(result.dof, 2);
    }
}
