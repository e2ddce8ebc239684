//! Welch's t-test and Holm step-down adjustment for the regime comparison.

use statrs::distribution::{ContinuousCDF, StudentsT};

/// Sample mean and unbiased variance; a single observation has variance 0.
pub(crate) fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Two-sided Welch t-test p-value for a difference in means.
///
/// Degenerate inputs resolve conservatively: zero pooled standard error
/// yields p = 1 for equal means and p = 0 otherwise.
pub fn welch_p_value(a: &[f64], b: &[f64]) -> f64 {
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let na = a.len() as f64;
    let nb = b.len() as f64;
    let se2 = va / na + vb / nb;
    if se2 <= 0.0 {
        return if ma == mb { 1.0 } else { 0.0 };
    }
    let t = (ma - mb) / se2.sqrt();
    // Welch-Satterthwaite degrees of freedom.
    let dof = se2 * se2
        / ((va / na).powi(2) / (na - 1.0).max(1.0) + (vb / nb).powi(2) / (nb - 1.0).max(1.0));
    let dof = dof.max(1.0);
    let dist = StudentsT::new(0.0, 1.0, dof).expect("valid dof");
    2.0 * (1.0 - dist.cdf(t.abs()))
}

/// Holm step-down adjusted p-values, in the input order.
pub fn holm_adjust(p_values: &[f64]) -> Vec<f64> {
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]));
    let mut adjusted = vec![0.0; m];
    let mut running = 0.0f64;
    for (rank, &idx) in order.iter().enumerate() {
        let scaled = ((m - rank) as f64 * p_values[idx]).min(1.0);
        running = running.max(scaled);
        adjusted[idx] = running;
    }
    adjusted
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_samples_have_p_one() {
        let xs = vec![0.3, 0.3, 0.3, 0.3];
        assert_eq!(welch_p_value(&xs, &xs), 1.0);
    }

    #[test]
    fn distant_samples_have_tiny_p() {
        // Means separated by ten pooled standard deviations.
        let a: Vec<f64> = (0..30).map(|i| 0.0 + 0.01 * (i % 5) as f64).collect();
        let b: Vec<f64> = (0..30).map(|i| 0.1 + 0.01 * (i % 5) as f64).collect();
        let p = welch_p_value(&a, &b);
        assert!(p < 1e-10, "p = {p}");
    }

    #[test]
    fn welch_matches_reference_value() {
        // Classic two-sample fixture, checked against scipy.stats.ttest_ind
        // with equal_var=False: t = -2.1009, p = 0.06213.
        let a = [27.5, 21.0, 19.0, 23.6, 17.0, 17.9, 16.9, 20.1, 21.9, 22.6, 23.1, 19.6, 19.0, 21.7, 21.4];
        let b = [27.1, 22.0, 20.8, 23.4, 23.4, 23.5, 25.8, 22.0, 24.8, 20.2, 21.9, 22.1, 22.9, 30.0, 23.9];
        let p = welch_p_value(&a, &b);
        assert!((p - 0.06213).abs() < 5e-4, "p = {p}");
    }

    #[test]
    fn holm_adjustment_is_monotone_and_bounded() {
        let p = vec![0.01, 0.04, 0.03];
        let adj = holm_adjust(&p);
        // Sorted: 0.01*3 = 0.03; 0.03*2 = 0.06; 0.04*1 = 0.04 -> max(0.06, 0.04) = 0.06.
        assert!((adj[0] - 0.03).abs() < 1e-12);
        assert!((adj[1] - 0.06).abs() < 1e-12);
        assert!((adj[2] - 0.06).abs() < 1e-12);
        for a in &adj {
            assert!(*a <= 1.0);
        }
    }

    #[test]
    fn holm_caps_at_one() {
        let adj = holm_adjust(&[0.9, 0.8, 0.7]);
        assert!(adj.iter().all(|&a| a == 1.0));
    }
}
