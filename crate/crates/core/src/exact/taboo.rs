//! Taboo transition probabilities and the permutation-invariant functional
//! built from nested taboo returns.

use crate::chain::DtmcSpec;
use crate::error::{Error, Result};
use crate::numeric::KahanSum;

/// `p^H_ij(n)` for all `i, j` and `n = 0..=n_max`.
#[derive(Debug, Clone)]
pub struct TabooTable {
    size: usize,
    taboo: Vec<usize>,
    mats: Vec<Vec<f64>>,
}

impl TabooTable {
    pub fn new(chain: &DtmcSpec, taboo: &[usize], n_max: usize) -> Result<Self> {
        let s = chain.size();
        let mut in_taboo = vec![false; s];
        for &h in taboo {
            if h >= s {
                return Err(Error::StateOutOfRange { index: h, size: s });
            }
            in_taboo[h] = true;
        }
        let mut mats = Vec::with_capacity(n_max + 1);
        let mut id = vec![0.0; s * s];
        for i in 0..s {
            id[i * s + i] = 1.0;
        }
        mats.push(id);
        if n_max >= 1 {
            mats.push(chain.matrix().to_vec());
        }
        for n in 2..=n_max {
            let prev = &mats[n - 1];
            let mut m = vec![0.0; s * s];
            for i in 0..s {
                for j in 0..s {
                    let mut acc = KahanSum::new();
                    for k in (0..s).filter(|&k| !in_taboo[k]) {
                        acc.add(chain.p(i, k) * prev[k * s + j]);
                    }
                    m[i * s + j] = acc.value();
                }
            }
            mats.push(m);
        }
        let mut taboo = taboo.to_vec();
        taboo.sort_unstable();
        taboo.dedup();
        Ok(Self {
            size: s,
            taboo,
            mats,
        })
    }

    pub fn taboo(&self) -> &[usize] {
        &self.taboo
    }

    pub fn n_max(&self) -> usize {
        self.mats.len() - 1
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, n: usize) -> f64 {
        self.mats[n][i * self.size + j]
    }
}

fn check_state(chain: &DtmcSpec, i: usize) -> Result<()> {
    if i >= chain.size() {
        Err(Error::StateOutOfRange {
            index: i,
            size: chain.size(),
        })
    } else {
        Ok(())
    }
}

/// `P_i(X_n = j, X_1..X_{n-1} not in H)`.
pub fn taboo_prob(chain: &DtmcSpec, i: usize, j: usize, taboo: &[usize], n: usize) -> Result<f64> {
    check_state(chain, i)?;
    check_state(chain, j)?;
    Ok(TabooTable::new(chain, taboo, n)?.get(i, j, n))
}

/// Absolute residual of the first-entry decomposition of `p^H_ij(n)` through
/// a state `k` outside `H`.
pub fn first_entry_residual(
    chain: &DtmcSpec,
    i: usize,
    j: usize,
    taboo: &[usize],
    k: usize,
    n: usize,
) -> Result<f64> {
    check_state(chain, i)?;
    check_state(chain, j)?;
    check_state(chain, k)?;
    if taboo.contains(&k) {
        return Err(Error::StateInTaboo(k));
    }
    let h = TabooTable::new(chain, taboo, n)?;
    let mut hk_set = taboo.to_vec();
    hk_set.push(k);
    let hk = TabooTable::new(chain, &hk_set, n)?;
    let mut rhs = KahanSum::new();
    rhs.add(hk.get(i, j, n));
    for m in 1..n {
        rhs.add(h.get(i, k, m) * hk.get(k, j, n - m));
    }
    Ok((h.get(i, j, n) - rhs.value()).abs())
}

/// `G^H_n(i_1..i_s)`: the `s`-fold convolution of return probabilities
/// `p^{H}_{i_1 i_1}, p^{H,i_1}_{i_2 i_2}, ...` evaluated at total time `n`.
pub fn g_functional(chain: &DtmcSpec, taboo: &[usize], states: &[usize], n: usize) -> Result<f64> {
    if states.is_empty() {
        return Err(Error::EmptyCycle);
    }
    for (a, &s) in states.iter().enumerate() {
        check_state(chain, s)?;
        if states[..a].contains(&s) {
            return Err(Error::DuplicateState(s));
        }
        if taboo.contains(&s) {
            return Err(Error::StateInTaboo(s));
        }
    }
    let mut set = taboo.to_vec();
    let mut conv: Vec<f64> = vec![1.0];
    conv.resize(n + 1, 0.0);
    for &s in states {
        let table = TabooTable::new(chain, &set, n)?;
        let factor: Vec<f64> = (0..=n).map(|m| table.get(s, s, m)).collect();
        let mut next = vec![0.0; n + 1];
        for (total, out) in next.iter_mut().enumerate() {
            let mut acc = KahanSum::new();
            for m in 0..=total {
                acc.add(conv[m] * factor[total - m]);
            }
            *out = acc.value();
        }
        conv = next;
        set.push(s);
    }
    Ok(conv[n])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{validate_chain, ChainKind};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_dtmc(s: usize, rng: &mut ChaCha8Rng) -> DtmcSpec {
        let rows: Vec<Vec<f64>> = (0..s)
            .map(|_| {
                let w: Vec<f64> = (0..s).map(|_| rng.random_range(0.05..1.0)).collect();
                let t: f64 = w.iter().sum();
                w.iter().map(|x| x / t).collect()
            })
            .collect();
        validate_chain(&rows, ChainKind::Dtmc)
            .unwrap()
            .as_dtmc()
            .unwrap()
            .clone()
    }

    /// Sums path probabilities over every intermediate sequence.
    fn brute_taboo(chain: &DtmcSpec, i: usize, j: usize, taboo: &[usize], n: usize) -> f64 {
        if n == 0 {
            return if i == j { 1.0 } else { 0.0 };
        }
        let s = chain.size();
        let mut total = 0.0;
        let paths = s.pow(n as u32 - 1);
        for code in 0..paths {
            let mut c = code;
            let mut prev = i;
            let mut p = 1.0;
            let mut ok = true;
            for _ in 0..n - 1 {
                let x = c % s;
                c /= s;
                if taboo.contains(&x) {
                    ok = false;
                    break;
                }
                p *= chain.p(prev, x);
                prev = x;
            }
            if ok {
                total += p * chain.p(prev, j);
            }
        }
        total
    }

    fn matrix_power_entry(chain: &DtmcSpec, i: usize, j: usize, n: usize) -> f64 {
        let s = chain.size();
        let mut v = vec![0.0; s];
        v[i] = 1.0;
        for _ in 0..n {
            let mut w = vec![0.0; s];
            for a in 0..s {
                for b in 0..s {
                    w[b] += v[a] * chain.p(a, b);
                }
            }
            v = w;
        }
        v[j]
    }

    #[test]
    fn base_cases_and_empty_taboo() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = random_dtmc(4, &mut rng);
        assert_eq!(taboo_prob(&c, 2, 2, &[1], 0).unwrap(), 1.0);
        assert_eq!(taboo_prob(&c, 2, 3, &[1], 0).unwrap(), 0.0);
        assert_eq!(taboo_prob(&c, 1, 3, &[1, 3], 1).unwrap(), c.p(1, 3));
        for n in 0..7 {
            let a = taboo_prob(&c, 0, 3, &[], n).unwrap();
            let b = matrix_power_entry(&c, 0, 3, n);
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn matches_path_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c = random_dtmc(4, &mut rng);
        for i in 0..4 {
            for j in 0..4 {
                let a = taboo_prob(&c, i, j, &[2], 5).unwrap();
                let b = brute_taboo(&c, i, j, &[2], 5);
                assert!((a - b).abs() < 1e-14, "{i}->{j}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn table_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = random_dtmc(5, &mut rng);
        let t = TabooTable::new(&c, &[0, 4], 10).unwrap();
        for n in 0..=10 {
            for i in 0..5 {
                let row: f64 = (0..5).map(|j| t.get(i, j, n)).sum();
                assert!(row <= 1.0 + 1e-14);
                for j in 0..5 {
                    let v = t.get(i, j, n);
                    assert!((0.0..=1.0).contains(&v));
                }
            }
        }
    }

    #[test]
    fn first_entry_residuals() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let c = random_dtmc(5, &mut rng);
        assert_eq!(first_entry_residual(&c, 0, 1, &[3], 2, 1).unwrap(), 0.0);
        assert_eq!(first_entry_residual(&c, 0, 0, &[3], 2, 0).unwrap(), 0.0);
        assert!(first_entry_residual(&c, 0, 1, &[3, 4], 2, 8).unwrap() <= 1e-12);
        assert_eq!(
            first_entry_residual(&c, 0, 1, &[3], 3, 4),
            Err(Error::StateInTaboo(3))
        );
    }

    #[test]
    fn g_functional_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = random_dtmc(5, &mut rng);
        let single = g_functional(&c, &[4], &[1], 6).unwrap();
        assert_eq!(single, taboo_prob(&c, 1, 1, &[4], 6).unwrap());
        assert_eq!(g_functional(&c, &[4], &[0, 1, 2], 0).unwrap(), 1.0);
        let perms = [
            [0, 1, 2],
            [0, 2, 1],
            [1, 0, 2],
            [1, 2, 0],
            [2, 0, 1],
            [2, 1, 0],
        ];
        let base = g_functional(&c, &[4], &perms[0], 6).unwrap();
        for p in &perms[1..] {
            let g = g_functional(&c, &[4], p, 6).unwrap();
            assert!((g - base).abs() <= 1e-12 * base.max(1e-300) + 1e-15);
        }
        assert_eq!(
            g_functional(&c, &[], &[1, 1], 3),
            Err(Error::DuplicateState(1))
        );
        assert_eq!(
            g_functional(&c, &[2], &[1, 2], 3),
            Err(Error::StateInTaboo(2))
        );
    }
}
