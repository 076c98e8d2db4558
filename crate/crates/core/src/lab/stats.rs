//! Hypothesis-test helpers.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("unit normal").inverse_cdf(p)
}

/// Two-sided critical value at level `alpha` split over `tests` comparisons.
pub fn bonferroni_z(alpha: f64, tests: usize) -> f64 {
    normal_quantile(1.0 - alpha / (2.0 * tests.max(1) as f64))
}

/// Sample mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::INFINITY);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n1: usize,
    pub n2: usize,
}

/// Kolmogorov survival function `Q(l) = 2 sum (-1)^{k-1} exp(-2 k^2 l^2)`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=200 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-17 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sample Kolmogorov-Smirnov test with the asymptotic p-value and the
/// usual small-sample correction to the scaling.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    let (n1, n2) = (a.len(), b.len());
    if n1 == 0 || n2 == 0 {
        return KsResult {
            statistic: 0.0,
            p_value: 1.0,
            n1,
            n2,
        };
    }
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n1 && j < n2 {
        let v = x[i].min(y[j]);
        while i < n1 && x[i] <= v {
            i += 1;
        }
        while j < n2 && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n1 as f64 - j as f64 / n2 as f64).abs());
    }
    let ne = (n1 * n2) as f64 / (n1 + n2) as f64;
    let s = ne.sqrt();
    KsResult {
        statistic: d,
        p_value: kolmogorov_q((s + 0.12 + 0.11 / s) * d),
        n1,
        n2,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson chi-square test of independence on a contingency table. Empty
/// rows and columns are dropped.
pub fn chi_square_independence(table: &[Vec<f64>]) -> ChiSquareResult {
    let rows: Vec<&Vec<f64>> = table
        .iter()
        .filter(|r| r.iter().sum::<f64>() > 0.0)
        .collect();
    let ncol = rows.first().map_or(0, |r| r.len());
    let cols: Vec<usize> = (0..ncol)
        .filter(|&c| rows.iter().map(|r| r[c]).sum::<f64>() > 0.0)
        .collect();
    if rows.len() < 2 || cols.len() < 2 {
        return ChiSquareResult {
            statistic: 0.0,
            dof: 0,
            p_value: 1.0,
        };
    }
    let row_sum: Vec<f64> = rows
        .iter()
        .map(|r| cols.iter().map(|&c| r[c]).sum())
        .collect();
    let col_sum: Vec<f64> = cols
        .iter()
        .map(|&c| rows.iter().map(|r| r[c]).sum())
        .collect();
    let total: f64 = row_sum.iter().sum();
    let mut stat = 0.0;
    for (r, rs) in rows.iter().zip(&row_sum) {
        for (&c, cs) in cols.iter().zip(&col_sum) {
            let e = rs * cs / total;
            stat += (r[c] - e).powi(2) / e;
        }
    }
    let dof = (rows.len() - 1) * (cols.len() - 1);
    let p_value = 1.0 - ChiSquared::new(dof as f64).expect("positive dof").cdf(stat);
    ChiSquareResult {
        statistic: stat,
        dof,
        p_value,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn quantiles() {
        assert!((normal_quantile(0.975) - 1.959964).abs() < 1e-5);
        assert!((bonferroni_z(0.01, 1) - 2.575829).abs() < 1e-5);
        assert!(bonferroni_z(0.01, 6) > bonferroni_z(0.01, 1));
    }

    #[test]
    fn kolmogorov_series_values() {
        // classical critical values: Q(1.36) ~ 0.05, Q(1.63) ~ 0.01
        assert!((kolmogorov_q(1.358) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_q(1.628) - 0.01).abs() < 1e-3);
        assert_eq!(kolmogorov_q(0.0), 1.0);
    }

    #[test]
    fn ks_detects_shift_only_when_present() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a: Vec<f64> = (0..2000).map(|_| rng.random::<f64>()).collect();
        let b: Vec<f64> = (0..1500).map(|_| rng.random::<f64>()).collect();
        let c: Vec<f64> = (0..1500).map(|_| rng.random::<f64>() + 0.1).collect();
        assert!(ks_two_sample(&a, &b).p_value > 0.01);
        assert!(ks_two_sample(&a, &c).p_value < 1e-6);
        let same = ks_two_sample(&[1.0, 2.0, 2.0], &[1.0, 2.0, 2.0]);
        assert_eq!(same.statistic, 0.0);
    }

    #[test]
    fn chi_square_examples() {
        let indep = vec![vec![20.0, 40.0], vec![30.0, 60.0]];
        let r = chi_square_independence(&indep);
        assert!(r.statistic.abs() < 1e-12);
        assert_eq!(r.dof, 1);
        assert!((r.p_value - 1.0).abs() < 1e-12);
        let dep = vec![vec![50.0, 5.0], vec![5.0, 50.0]];
        assert!(chi_square_independence(&dep).p_value < 1e-10);
        let one_col = vec![vec![3.0, 0.0], vec![4.0, 0.0]];
        assert_eq!(chi_square_independence(&one_col).dof, 0);
    }

    #[test]
    fn mean_and_error() {
        let (m, se) = mean_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((se - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
    }
}
