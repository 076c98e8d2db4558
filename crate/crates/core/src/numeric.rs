//! Small numeric helpers: compensated summation, dense linear solves and
//! Poisson weights for uniformization.

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Kahan–Babuška compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for KahanSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = KahanSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

pub fn kahan_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<KahanSum>().value()
}

/// Solves `a x = b` for a dense row-major `n x n` matrix by Gaussian
/// elimination with partial pivoting.
pub fn solve_dense(mut a: Vec<f64>, mut b: Vec<f64>, n: usize) -> Result<Vec<f64>> {
    assert_eq!(a.len(), n * n);
    assert_eq!(b.len(), n);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&r, &s| a[r * n + col].abs().total_cmp(&a[s * n + col].abs()))
            .unwrap();
        if a[pivot * n + col].abs() < 1e-300 {
            return Err(Error::Singular);
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        let d = a[col * n + col];
        for row in col + 1..n {
            let f = a[row * n + col] / d;
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row * n + k] -= f * a[col * n + k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = KahanSum::new();
        acc.add(b[row]);
        for k in row + 1..n {
            acc.add(-a[row * n + k] * x[k]);
        }
        x[row] = acc.value() / a[row * n + row];
    }
    Ok(x)
}

/// Poisson(`mean`) probabilities `w_0..=w_K`, where `K` is the first index past
/// the mean at which the remaining tail is provably below `tol`.
#[derive(Debug, Clone)]
pub struct PoissonWeights {
    pub weights: Vec<f64>,
    /// Upper bound on `sum_{k > K} w_k`.
    pub tail_bound: f64,
}

pub fn poisson_weights(mean: f64, tol: f64) -> PoissonWeights {
    assert!(mean >= 0.0 && mean.is_finite());
    if mean == 0.0 {
        return PoissonWeights {
            weights: vec![1.0],
            tail_bound: 0.0,
        };
    }
    let ln_mean = mean.ln();
    let mut weights = Vec::new();
    let mut k = 0usize;
    loop {
        let lw = -mean + k as f64 * ln_mean - ln_gamma(k as f64 + 1.0);
        weights.push(lw.exp());
        let next = k + 1;
        if (next as f64) + 1.0 > mean {
            // sum_{j > k} w_j <= w_{k+1} / (1 - mean / (k + 2))
            let ratio = mean / (next as f64 + 1.0);
            let lw_next = -mean + next as f64 * ln_mean - ln_gamma(next as f64 + 1.0);
            let bound = lw_next.exp() / (1.0 - ratio);
            if bound < tol {
                return PoissonWeights {
                    weights,
                    tail_bound: bound,
                };
            }
        }
        k = next;
    }
}

/// `P(Poisson(mean) >= m)` for `m = 0..len`, computed from the weights.
pub fn poisson_upper_tails(w: &PoissonWeights, len: usize) -> Vec<f64> {
    let k_max = w.weights.len();
    let mut out = vec![0.0; len];
    // tail[m] = tail_bound + sum_{k >= m, k < K} w_k
    let mut acc = KahanSum::new();
    acc.add(w.tail_bound);
    let mut tails = vec![0.0; k_max + 1];
    tails[k_max] = acc.value();
    for k in (0..k_max).rev() {
        acc.add(w.weights[k]);
        tails[k] = acc.value();
    }
    for (m, o) in out.iter_mut().enumerate() {
        *o = if m == 0 {
            1.0
        } else if m <= k_max {
            tails[m].min(1.0)
        } else {
            w.tail_bound
        };
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kahan_recovers_small_terms() {
        let mut acc = KahanSum::new();
        acc.add(1.0);
        for _ in 0..10_000 {
            acc.add(1e-16);
        }
        assert!((acc.value() - (1.0 + 1e-12)).abs() < 1e-15);
    }

    #[test]
    fn solve_small_system() {
        let a = vec![2.0, 1.0, 1.0, 3.0];
        let x = solve_dense(a, vec![3.0, 5.0], 2).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-14);
        assert!((x[1] - 1.4).abs() < 1e-14);
    }

    #[test]
    fn singular_system_is_reported() {
        let a = vec![1.0, 2.0, 2.0, 4.0];
        assert_eq!(solve_dense(a, vec![1.0, 2.0], 2), Err(Error::Singular));
    }

    #[test]
    fn poisson_weights_sum_to_one() {
        for &mean in &[0.3, 2.0, 17.5, 400.0] {
            let w = poisson_weights(mean, 1e-14);
            let s = kahan_sum(w.weights.iter().copied());
            assert!((s + w.tail_bound - 1.0).abs() < 1e-12, "mean {mean}: {s}");
            assert!(w.tail_bound < 1e-14);
        }
    }

    #[test]
    fn poisson_zero_mean_is_point_mass() {
        let w = poisson_weights(0.0, 1e-12);
        assert_eq!(w.weights, vec![1.0]);
        assert_eq!(poisson_upper_tails(&w, 3), vec![1.0, 0.0, 0.0]);
    }
}
