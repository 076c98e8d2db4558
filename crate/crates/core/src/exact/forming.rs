//! Exact law of the first forming time of a cycle family and of which
//! cycle formed first.

use serde::Serialize;

use super::augmented::AugmentedChain;
use crate::chain::{ChainSpec, CtmcSpec, DtmcSpec};
use crate::cycle::Cycle;
use crate::error::{Error, Result};
use crate::numeric::{poisson_upper_tails, poisson_weights, solve_dense, KahanSum};

/// Poisson tail tolerance for uniformized time laws.
pub const POISSON_TOL: f64 = 1e-12;

/// States shared by every cycle of the family, in increasing order.
pub fn common_states(family: &[Cycle]) -> Vec<usize> {
    match family.split_first() {
        None => Vec::new(),
        Some((first, rest)) => first
            .states()
            .iter()
            .copied()
            .filter(|&s| rest.iter().all(|c| c.contains(s)))
            .collect(),
    }
}

pub fn pairwise_similar(family: &[Cycle]) -> bool {
    family.windows(2).all(|w| w[0].is_similar(&w[1]))
}

/// A similar family may start anywhere; any other family must start at a
/// state shared by all its cycles.
pub fn check_family_start(family: &[Cycle], start: usize, require_common: bool) -> Result<()> {
    if family.is_empty() {
        return Err(Error::InvalidArgument("empty cycle family".into()));
    }
    for (k, c) in family.iter().enumerate() {
        if family[..k].contains(c) {
            return Err(Error::InvalidArgument(format!("cycle {c} listed twice")));
        }
    }
    let common = common_states(family);
    if common.is_empty() {
        return Err(Error::NoCommonState);
    }
    if (require_common || !pairwise_similar(family)) && !common.contains(&start) {
        return Err(Error::StartNotCommon { start });
    }
    Ok(())
}

fn check_cycles_in_range(family: &[Cycle], size: usize) -> Result<()> {
    for c in family {
        if let Some(&s) = c.states().iter().find(|&&s| s >= size) {
            return Err(Error::StateOutOfRange { index: s, size });
        }
    }
    Ok(())
}

/// `P(T = n, xi = k)` for `n <= n_max`, plus the exact `P(xi = k)`.
#[derive(Debug, Clone, Serialize)]
pub struct FormingDistribution {
    pub cycles: Vec<Cycle>,
    pub start: usize,
    pub n_max: usize,
    /// `buckets[k][n] = P(T = n, T = T^{c_k})`.
    pub buckets: Vec<Vec<f64>>,
    /// Mass with no watched pop by step `n_max`.
    pub tail: f64,
    /// `P(T = T^{c_k})` over an unbounded horizon.
    pub absorption: Vec<f64>,
}

impl FormingDistribution {
    /// `P(T = n)`.
    pub fn time_marginal(&self) -> Vec<f64> {
        (0..=self.n_max)
            .map(|n| self.buckets.iter().map(|b| b[n]).sum())
            .collect()
    }

    /// `P(T = T^{c_k})` up to `n_max`.
    pub fn bucket_mass(&self, k: usize) -> f64 {
        KahanSum::from_iter(self.buckets[k].iter().copied()).value()
    }

    /// `P(T = n | T = T^{c_k})` restricted to `n <= n_max`.
    pub fn conditional(&self, k: usize) -> Vec<f64> {
        let total = self.bucket_mass(k);
        self.buckets[k]
            .iter()
            .map(|&b| if total > 0.0 { b / total } else { 0.0 })
            .collect()
    }
}

/// Forward DP over the derived chain from `[start]`, absorbing on the first
/// pop of any watched cycle.
pub fn exact_forming_dist(
    chain: &DtmcSpec,
    cycles: &[Cycle],
    start: usize,
    n_max: usize,
) -> Result<FormingDistribution> {
    check_cycles_in_range(cycles, chain.size())?;
    check_family_start(cycles, start, false)?;
    let aug = AugmentedChain::from_dtmc(chain, start)?;
    let (buckets, tail) = absorbed_by_step(&aug, cycles, n_max);
    let absorption = absorption_probabilities(&aug, cycles)?;
    Ok(FormingDistribution {
        cycles: cycles.to_vec(),
        start,
        n_max,
        buckets,
        tail,
        absorption,
    })
}

/// `P(T = T^{c_k})` for a DTMC or CTMC started at `start`.
pub fn exact_absorption(chain: &ChainSpec, cycles: &[Cycle], start: usize) -> Result<Vec<f64>> {
    check_cycles_in_range(cycles, chain.size())?;
    check_family_start(cycles, start, false)?;
    let aug = AugmentedChain::for_chain(chain, start)?;
    absorption_probabilities(&aug, cycles)
}

/// Mass absorbed at each step through each watched cycle, and the mass left.
pub(crate) fn absorbed_by_step(
    aug: &AugmentedChain,
    cycles: &[Cycle],
    n_max: usize,
) -> (Vec<Vec<f64>>, f64) {
    let watch = aug.watch_index(cycles);
    let mut buckets = vec![vec![0.0; n_max + 1]; cycles.len()];
    let mut cur = vec![0.0; aug.len()];
    cur[0] = 1.0;
    #[allow(clippy::needless_range_loop)]
    for n in 1..=n_max {
        let mut next = vec![0.0; aug.len()];
        for (node, &m) in cur.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            for (e, w) in aug.edges(node).iter().zip(&watch[node]) {
                match *w {
                    Some(k) => buckets[k][n] += m * e.prob,
                    None => next[e.to] += m * e.prob,
                }
            }
        }
        cur = next;
    }
    let tail = KahanSum::from_iter(cur).value();
    (buckets, tail)
}

/// Solves for the probability that the first watched pop is cycle `k`.
pub(crate) fn absorption_probabilities(aug: &AugmentedChain, cycles: &[Cycle]) -> Result<Vec<f64>> {
    let watch = aug.watch_index(cycles);
    let n = aug.len();
    // nodes from which some watched pop is reachable without absorbing first
    let mut live = vec![false; n];
    for node in 0..n {
        live[node] = watch[node].iter().any(Option::is_some);
    }
    loop {
        let mut changed = false;
        for node in 0..n {
            if live[node] {
                continue;
            }
            let reaches = aug
                .edges(node)
                .iter()
                .zip(&watch[node])
                .any(|(e, w)| w.is_none() && live[e.to]);
            if reaches {
                live[node] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    if !live[0] {
        return Ok(vec![0.0; cycles.len()]);
    }
    let idx: Vec<usize> = (0..n).filter(|&k| live[k]).collect();
    let mut pos = vec![usize::MAX; n];
    for (p, &k) in idx.iter().enumerate() {
        pos[k] = p;
    }
    let m = idx.len();
    let mut a = vec![0.0; m * m];
    let mut b = vec![vec![0.0; m]; cycles.len()];
    for (r, &node) in idx.iter().enumerate() {
        a[r * m + r] += 1.0;
        for (e, w) in aug.edges(node).iter().zip(&watch[node]) {
            match *w {
                Some(k) => b[k][r] += e.prob,
                None if live[e.to] => a[r * m + pos[e.to]] -= e.prob,
                None => {}
            }
        }
    }
    b.into_iter()
        .map(|rhs| solve_dense(a.clone(), rhs, m).map(|h| h[0]))
        .collect()
}

/// `P(T <= t, xi = k)` for a CTMC at several times.
#[derive(Debug, Clone, Serialize)]
pub struct FormingCdf {
    pub cycles: Vec<Cycle>,
    pub start: usize,
    pub times: Vec<f64>,
    /// `cdf[k][i] = P(T <= times[i], T = T^{c_k})`.
    pub cdf: Vec<Vec<f64>>,
    /// `P(T = T^{c_k})` over an unbounded horizon.
    pub absorption: Vec<f64>,
    /// Bound on the Poisson truncation error of every entry.
    pub eps_trunc: f64,
}

pub fn exact_forming_cdf(
    chain: &CtmcSpec,
    cycles: &[Cycle],
    start: usize,
    times: &[f64],
) -> Result<FormingCdf> {
    check_cycles_in_range(cycles, chain.size())?;
    check_family_start(cycles, start, false)?;
    if let Some(&t) = times.iter().find(|&&t| !(t >= 0.0 && t.is_finite())) {
        return Err(Error::InvalidArgument(format!("bad time {t}")));
    }
    let aug = AugmentedChain::for_chain(&ChainSpec::Ctmc(chain.clone()), start)?;
    let rate = aug.rate().expect("uniformized");
    let weights: Vec<_> = times
        .iter()
        .map(|&t| poisson_weights(rate * t, POISSON_TOL))
        .collect();
    let m_max = weights.iter().map(|w| w.weights.len()).max().unwrap_or(1);
    let (steps, _) = absorbed_by_step(&aug, cycles, m_max);
    let mut eps_trunc: f64 = 0.0;
    let mut cdf = vec![vec![0.0; times.len()]; cycles.len()];
    for (i, w) in weights.iter().enumerate() {
        eps_trunc = eps_trunc.max(w.tail_bound);
        let tails = poisson_upper_tails(w, m_max + 1);
        for k in 0..cycles.len() {
            let acc: KahanSum = (1..=m_max).map(|m| steps[k][m] * tails[m]).collect();
            cdf[k][i] = acc.value();
        }
    }
    let absorption = absorption_probabilities(&aug, cycles)?;
    Ok(FormingCdf {
        cycles: cycles.to_vec(),
        start,
        times: times.to_vec(),
        cdf,
        absorption,
        eps_trunc,
    })
}
