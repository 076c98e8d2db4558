//! Finite DTMC and CTMC specifications.
//!
//! Matrices are validated once and then frozen: rows of a transition matrix
//! sum to one, rows of a rate matrix sum to zero, and the positive-weight
//! digraph is strongly connected. Everything downstream assumes these hold.

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::{Serialize, Serializer};

use crate::cycle::{Cycle, MAX_STATES};
use crate::error::{Error, Result};
use crate::numeric::{kahan_sum, solve_dense};

/// Tolerance on row sums (stochasticity and conservativity).
pub const ROW_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ChainKind {
    Dtmc,
    Ctmc,
}

impl std::str::FromStr for ChainKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dtmc" => Ok(ChainKind::Dtmc),
            "ctmc" => Ok(ChainKind::Ctmc),
            other => Err(Error::InvalidArgument(format!(
                "chain kind must be dtmc or ctmc, got `{other}`"
            ))),
        }
    }
}

/// Ordered, distinct state labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StateSpace {
    labels: Vec<String>,
}

impl StateSpace {
    pub fn new(labels: Vec<String>) -> Result<Self> {
        for (k, l) in labels.iter().enumerate() {
            if labels[..k].contains(l) {
                return Err(Error::DuplicateLabel(l.clone()));
            }
        }
        Ok(Self { labels })
    }

    /// Labels `0, 1, ..., size-1`.
    pub fn numbered(size: usize) -> Self {
        Self {
            labels: (0..size).map(|i| i.to_string()).collect(),
        }
    }

    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownState(label.to_string()))
    }
}

/// Validated transition probability matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DtmcSpec {
    states: StateSpace,
    p: Vec<f64>,
}

/// Validated transition rate matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CtmcSpec {
    states: StateSpace,
    q: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ChainSpec {
    Dtmc(DtmcSpec),
    Ctmc(CtmcSpec),
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ValidateOptions {
    /// Rescale DTMC rows to sum to one, or reset CTMC diagonals, instead of
    /// rejecting them.
    pub renormalize: bool,
}

/// Validates a raw matrix with numbered state labels.
pub fn validate_chain(raw: &[Vec<f64>], kind: ChainKind) -> Result<ChainSpec> {
    let states = StateSpace::numbered(raw.len());
    ChainSpec::new(kind, states, raw, ValidateOptions::default())
}

impl ChainSpec {
    pub fn new(
        kind: ChainKind,
        states: StateSpace,
        raw: &[Vec<f64>],
        opts: ValidateOptions,
    ) -> Result<Self> {
        let n = raw.len();
        if n < 2 {
            return Err(Error::TooFewStates(n));
        }
        if n > MAX_STATES {
            return Err(Error::TooManyStates {
                got: n,
                max: MAX_STATES,
            });
        }
        if states.size() != n {
            return Err(Error::LabelCountMismatch {
                labels: states.size(),
                size: n,
            });
        }
        let mut flat = Vec::with_capacity(n * n);
        for (row, r) in raw.iter().enumerate() {
            if r.len() != n {
                return Err(Error::NotSquare {
                    row,
                    len: r.len(),
                    expected: n,
                });
            }
            for (col, &v) in r.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonFinite { row, col });
                }
            }
            flat.extend_from_slice(r);
        }
        let spec = match kind {
            ChainKind::Dtmc => {
                check_dtmc(&mut flat, n, opts.renormalize)?;
                ChainSpec::Dtmc(DtmcSpec { states, p: flat })
            }
            ChainKind::Ctmc => {
                check_ctmc(&mut flat, n, opts.renormalize)?;
                ChainSpec::Ctmc(CtmcSpec { states, q: flat })
            }
        };
        check_irreducible(n, |i, j| spec.weight(i, j))?;
        Ok(spec)
    }

    pub fn kind(&self) -> ChainKind {
        match self {
            ChainSpec::Dtmc(_) => ChainKind::Dtmc,
            ChainSpec::Ctmc(_) => ChainKind::Ctmc,
        }
    }

    pub fn states(&self) -> &StateSpace {
        match self {
            ChainSpec::Dtmc(d) => &d.states,
            ChainSpec::Ctmc(c) => &c.states,
        }
    }

    pub fn size(&self) -> usize {
        self.states().size()
    }

    /// One-step weight of `i -> j`: `p_ij` for a DTMC, `q_ij` for a CTMC
    /// (zero on the CTMC diagonal, which is not a jump).
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        match self {
            ChainSpec::Dtmc(d) => d.p(i, j),
            ChainSpec::Ctmc(c) => {
                if i == j {
                    0.0
                } else {
                    c.q(i, j)
                }
            }
        }
    }

    pub fn as_dtmc(&self) -> Option<&DtmcSpec> {
        match self {
            ChainSpec::Dtmc(d) => Some(d),
            ChainSpec::Ctmc(_) => None,
        }
    }

    pub fn as_ctmc(&self) -> Option<&CtmcSpec> {
        match self {
            ChainSpec::Ctmc(c) => Some(c),
            ChainSpec::Dtmc(_) => None,
        }
    }

    /// Raw matrix rows (P or Q).
    pub fn rows(&self) -> Vec<Vec<f64>> {
        let n = self.size();
        let flat = match self {
            ChainSpec::Dtmc(d) => &d.p,
            ChainSpec::Ctmc(c) => &c.q,
        };
        flat.chunks(n).map(|r| r.to_vec()).collect()
    }

    /// Stationary distribution.
    pub fn stationary(&self) -> Result<Vec<f64>> {
        match self {
            ChainSpec::Dtmc(d) => d.stationary(),
            ChainSpec::Ctmc(c) => c.stationary(),
        }
    }
}

fn check_dtmc(p: &mut [f64], n: usize, renormalize: bool) -> Result<()> {
    for row in 0..n {
        for col in 0..n {
            let v = p[row * n + col];
            if v < 0.0 {
                return Err(Error::NegativeProbability { row, col, value: v });
            }
        }
        let sum = kahan_sum(p[row * n..(row + 1) * n].iter().copied());
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            if renormalize && sum > 0.0 {
                for v in &mut p[row * n..(row + 1) * n] {
                    *v /= sum;
                }
            } else {
                return Err(Error::NonStochasticRow { row, sum });
            }
        }
    }
    Ok(())
}

fn check_ctmc(q: &mut [f64], n: usize, renormalize: bool) -> Result<()> {
    for row in 0..n {
        for col in 0..n {
            let v = q[row * n + col];
            if col != row && v < 0.0 {
                return Err(Error::NegativeRate { row, col, value: v });
            }
        }
        let off = kahan_sum((0..n).filter(|&c| c != row).map(|c| q[row * n + c]));
        let diagonal = q[row * n + row];
        if (diagonal + off).abs() > ROW_SUM_TOL {
            if renormalize {
                q[row * n + row] = -off;
            } else {
                return Err(Error::BadDiagonal {
                    row,
                    diagonal,
                    expected: -off,
                });
            }
        }
    }
    Ok(())
}

fn check_irreducible(n: usize, weight: impl Fn(usize, usize) -> f64) -> Result<()> {
    let mut g = DiGraph::<usize, ()>::with_capacity(n, n * n);
    let nodes: Vec<_> = (0..n).map(|i| g.add_node(i)).collect();
    for i in 0..n {
        for j in 0..n {
            if i != j && weight(i, j) > 0.0 {
                g.add_edge(nodes[i], nodes[j], ());
            }
        }
    }
    let sccs = tarjan_scc(&g);
    if sccs.len() == 1 {
        return Ok(());
    }
    let home = sccs
        .iter()
        .find(|c| c.contains(&nodes[0]))
        .expect("state 0 belongs to some component");
    let state = (0..n)
        .find(|&i| !home.contains(&nodes[i]))
        .expect("more than one component");
    Err(Error::Reducible { state })
}

impl DtmcSpec {
    pub fn new(states: StateSpace, raw: &[Vec<f64>]) -> Result<Self> {
        match ChainSpec::new(ChainKind::Dtmc, states, raw, ValidateOptions::default())? {
            ChainSpec::Dtmc(d) => Ok(d),
            ChainSpec::Ctmc(_) => unreachable!(),
        }
    }

    pub fn states(&self) -> &StateSpace {
        &self.states
    }

    pub fn size(&self) -> usize {
        self.states.size()
    }

    #[inline]
    pub fn p(&self, i: usize, j: usize) -> f64 {
        self.p[i * self.size() + j]
    }

    /// Row-major transition matrix.
    pub fn matrix(&self) -> &[f64] {
        &self.p
    }

    pub fn stationary(&self) -> Result<Vec<f64>> {
        let n = self.size();
        // pi (P - I) = 0 with the last equation replaced by sum(pi) = 1.
        let mut a = vec![0.0; n * n];
        for r in 0..n {
            for c in 0..n {
                a[r * n + c] = self.p(c, r) - if r == c { 1.0 } else { 0.0 };
            }
        }
        for c in 0..n {
            a[(n - 1) * n + c] = 1.0;
        }
        let mut b = vec![0.0; n];
        b[n - 1] = 1.0;
        solve_dense(a, b, n)
    }
}

impl CtmcSpec {
    pub fn new(states: StateSpace, raw: &[Vec<f64>]) -> Result<Self> {
        match ChainSpec::new(ChainKind::Ctmc, states, raw, ValidateOptions::default())? {
            ChainSpec::Ctmc(c) => Ok(c),
            ChainSpec::Dtmc(_) => unreachable!(),
        }
    }

    pub fn states(&self) -> &StateSpace {
        &self.states
    }

    pub fn size(&self) -> usize {
        self.states.size()
    }

    #[inline]
    pub fn q(&self, i: usize, j: usize) -> f64 {
        self.q[i * self.size() + j]
    }

    /// Total exit rate `q_i = -q_ii`.
    pub fn exit_rate(&self, i: usize) -> f64 {
        -self.q(i, i)
    }

    pub fn max_exit_rate(&self) -> f64 {
        (0..self.size())
            .map(|i| self.exit_rate(i))
            .fold(0.0, f64::max)
    }

    /// Embedded jump chain: `p_ij = q_ij / q_i` for `j != i`.
    pub fn embedded(&self) -> Result<DtmcSpec> {
        let n = self.size();
        let mut rows = vec![vec![0.0; n]; n];
        for (i, row) in rows.iter_mut().enumerate() {
            let qi = self.exit_rate(i);
            if qi <= 0.0 {
                return Err(Error::AbsorbingState(i));
            }
            for (j, v) in row.iter_mut().enumerate() {
                if j != i {
                    *v = self.q(i, j) / qi;
                }
            }
        }
        let states = self.states.clone();
        match ChainSpec::new(
            ChainKind::Dtmc,
            states,
            &rows,
            ValidateOptions { renormalize: true },
        )? {
            ChainSpec::Dtmc(d) => Ok(d),
            ChainSpec::Ctmc(_) => unreachable!(),
        }
    }

    /// Uniformized kernel `I + Q / rate`, row-major.
    pub fn uniformized(&self, rate: f64) -> Result<Vec<f64>> {
        if rate.is_nan() || rate < self.max_exit_rate() || rate <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "uniformization rate {rate} below max exit rate {}",
                self.max_exit_rate()
            )));
        }
        let n = self.size();
        let mut u = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                u[i * n + j] = if i == j {
                    1.0 - self.exit_rate(i) / rate
                } else {
                    self.q(i, j) / rate
                };
            }
        }
        Ok(u)
    }

    pub fn stationary(&self) -> Result<Vec<f64>> {
        let n = self.size();
        let mut a = vec![0.0; n * n];
        for r in 0..n {
            for c in 0..n {
                a[r * n + c] = self.q(c, r);
            }
        }
        for c in 0..n {
            a[(n - 1) * n + c] = 1.0;
        }
        let mut b = vec![0.0; n];
        b[n - 1] = 1.0;
        solve_dense(a, b, n)
    }
}

fn check_cycle_states(chain: &ChainSpec, c: &Cycle) -> Result<()> {
    let n = chain.size();
    match c.states().iter().find(|&&s| s >= n) {
        Some(&s) => Err(Error::StateOutOfRange { index: s, size: n }),
        None => Ok(()),
    }
}

/// Product of one-step weights around the cycle. CTMC self-loops have
/// strength zero.
pub fn cycle_strength(chain: &ChainSpec, c: &Cycle) -> Result<f64> {
    check_cycle_states(chain, c)?;
    Ok(c.edges().map(|(i, j)| chain.weight(i, j)).product())
}

/// Cycle affinity `log(gamma_c / gamma_{c-})` as an extended real.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Affinity {
    Finite(f64),
    PosInfinity,
}

impl Affinity {
    pub fn is_finite(&self) -> bool {
        matches!(self, Affinity::Finite(_))
    }

    pub fn finite(&self) -> Option<f64> {
        match *self {
            Affinity::Finite(v) => Some(v),
            Affinity::PosInfinity => None,
        }
    }
}

impl Serialize for Affinity {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match *self {
            Affinity::Finite(v) => s.serialize_f64(v),
            Affinity::PosInfinity => s.serialize_str("+inf"),
        }
    }
}

pub fn cycle_affinity(chain: &ChainSpec, c: &Cycle) -> Result<Affinity> {
    let forward = cycle_strength(chain, c)?;
    if forward <= 0.0 {
        return Err(Error::ZeroForwardStrength);
    }
    let backward = cycle_strength(chain, &c.reversed())?;
    if backward <= 0.0 {
        return Ok(Affinity::PosInfinity);
    }
    Ok(Affinity::Finite(forward.ln() - backward.ln()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Reversibility {
    pub reversible: bool,
    /// A cycle whose strength differs from its reversal's.
    pub witness: Option<Cycle>,
}

/// Relative tolerance when comparing a cycle's strength with its reversal's.
const KOLMOGOROV_RTOL: f64 = 1e-10;

/// Kolmogorov's criterion over all cycles of length `3..=max_cycle_len`
/// (shorter cycles are their own reversals).
pub fn kolmogorov_reversible(chain: &ChainSpec, max_cycle_len: usize) -> Reversibility {
    let n = chain.size();
    let max_len = max_cycle_len.min(n);
    let mut path = Vec::with_capacity(max_len);
    for start in 0..n {
        path.clear();
        path.push(start);
        if let Some(w) = search_witness(chain, start, &mut path, max_len) {
            return Reversibility {
                reversible: false,
                witness: Some(w),
            };
        }
    }
    Reversibility {
        reversible: true,
        witness: None,
    }
}

/// DFS over simple paths that start at `start` and only use larger indices,
/// so each cycle is visited once per orientation.
fn search_witness(
    chain: &ChainSpec,
    start: usize,
    path: &mut Vec<usize>,
    max_len: usize,
) -> Option<Cycle> {
    let last = *path.last().unwrap();
    if path.len() >= 3 {
        let forward: f64 = path
            .windows(2)
            .map(|w| chain.weight(w[0], w[1]))
            .product::<f64>()
            * chain.weight(last, start);
        let backward: f64 = path
            .windows(2)
            .map(|w| chain.weight(w[1], w[0]))
            .product::<f64>()
            * chain.weight(start, last);
        if (forward - backward).abs() > KOLMOGOROV_RTOL * forward.max(backward) {
            let c = Cycle::new(path).expect("path states are distinct");
            return Some(if forward > backward { c } else { c.reversed() });
        }
    }
    if path.len() == max_len {
        return None;
    }
    for next in start + 1..chain.size() {
        if path.contains(&next) {
            continue;
        }
        path.push(next);
        let w = search_witness(chain, start, path, max_len);
        path.pop();
        if w.is_some() {
            return w;
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ctmc(rows: &[Vec<f64>]) -> ChainSpec {
        validate_chain(rows, ChainKind::Ctmc).unwrap()
    }

    fn cyclic_ctmc() -> ChainSpec {
        ctmc(&[
            vec![-1.0, 1.0, 0.0],
            vec![0.0, -2.0, 2.0],
            vec![3.0, 0.0, -3.0],
        ])
    }

    #[test]
    fn validates_doubly_stochastic() {
        let c = validate_chain(&[vec![0.5, 0.5], vec![0.5, 0.5]], ChainKind::Dtmc).unwrap();
        assert_eq!(c.kind(), ChainKind::Dtmc);
    }

    #[test]
    fn rejects_non_stochastic_row() {
        let e = validate_chain(&[vec![0.6, 0.5], vec![0.5, 0.5]], ChainKind::Dtmc).unwrap_err();
        assert!(matches!(e, Error::NonStochasticRow { row: 0, .. }));
    }

    #[test]
    fn renormalizes_only_on_request() {
        let raw = [vec![0.6, 0.6], vec![0.5, 0.5]];
        let c = ChainSpec::new(
            ChainKind::Dtmc,
            StateSpace::numbered(2),
            &raw,
            ValidateOptions { renormalize: true },
        )
        .unwrap();
        assert_eq!(c.weight(0, 0), 0.5);
    }

    #[test]
    fn rejects_bad_rates() {
        let e = validate_chain(&[vec![-1.0, 1.0], vec![-0.5, 0.5]], ChainKind::Ctmc).unwrap_err();
        assert!(matches!(e, Error::NegativeRate { row: 1, col: 0, .. }));
        let e = validate_chain(&[vec![-2.0, 1.0], vec![1.0, -1.0]], ChainKind::Ctmc).unwrap_err();
        assert!(matches!(e, Error::BadDiagonal { row: 0, .. }));
        let e = validate_chain(&[vec![1.0, 0.0], vec![0.5, 0.5]], ChainKind::Dtmc).unwrap_err();
        assert_eq!(e, Error::Reducible { state: 1 });
        let e = validate_chain(&[vec![1.0]], ChainKind::Dtmc).unwrap_err();
        assert_eq!(e, Error::TooFewStates(1));
        let e = validate_chain(&[vec![0.5, 0.5], vec![1.0]], ChainKind::Dtmc).unwrap_err();
        assert!(matches!(e, Error::NotSquare { row: 1, .. }));
    }

    #[test]
    fn one_directional_cycle_is_irreducible() {
        let c = cyclic_ctmc();
        assert_eq!(c.kind(), ChainKind::Ctmc);
    }

    #[test]
    fn strengths() {
        let c = cyclic_ctmc();
        let fwd = Cycle::new(&[0, 1, 2]).unwrap();
        assert_eq!(cycle_strength(&c, &fwd).unwrap(), 6.0);
        assert_eq!(cycle_strength(&c, &fwd.reversed()).unwrap(), 0.0);

        let u = validate_chain(
            &[
                vec![0.0, 0.5, 0.5],
                vec![0.5, 0.0, 0.5],
                vec![0.5, 0.5, 0.0],
            ],
            ChainKind::Dtmc,
        )
        .unwrap();
        assert_eq!(cycle_strength(&u, &fwd).unwrap(), 0.125);
        assert!(matches!(
            cycle_strength(&u, &Cycle::new(&[0, 5]).unwrap()),
            Err(Error::StateOutOfRange { .. })
        ));
    }

    #[test]
    fn affinities() {
        let c = cyclic_ctmc();
        let fwd = Cycle::new(&[0, 1, 2]).unwrap();
        assert_eq!(cycle_affinity(&c, &fwd).unwrap(), Affinity::PosInfinity);
        assert_eq!(
            cycle_affinity(&c, &fwd.reversed()),
            Err(Error::ZeroForwardStrength)
        );

        let half = ctmc(&[
            vec![-2.0, 1.0, 1.0],
            vec![1.0, -3.0, 2.0],
            vec![3.0, 1.0, -4.0],
        ]);
        // gamma(c) = 1*2*3 = 6, gamma(c-) = 1*1*1 = 1
        let a = cycle_affinity(&half, &fwd).unwrap().finite().unwrap();
        assert!((a - 6f64.ln()).abs() < 1e-15);

        let sym = validate_chain(&[vec![0.5, 0.5], vec![0.5, 0.5]], ChainKind::Dtmc).unwrap();
        let two = Cycle::new(&[0, 1]).unwrap();
        assert_eq!(cycle_affinity(&sym, &two).unwrap(), Affinity::Finite(0.0));

        let ratio = ctmc(&[
            vec![-2.0, 1.0, 1.0],
            vec![1.0, -3.0, 2.0],
            vec![3.0, 0.5, -3.5],
        ]);
        // gamma(c) = 6, gamma(c-) = 1 * 0.5 * 1 ... reversed: q02 q21 q10 = 1*0.5*1
        let a = cycle_affinity(&ratio, &fwd).unwrap().finite().unwrap();
        assert!((a - 12f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn affinity_log_two() {
        // gamma(c) = 6, gamma(c-) = 3
        let c = ctmc(&[
            vec![-4.0, 1.0, 3.0],
            vec![1.0, -3.0, 2.0],
            vec![3.0, 1.0, -4.0],
        ]);
        let a = cycle_affinity(&c, &Cycle::new(&[0, 1, 2]).unwrap())
            .unwrap()
            .finite()
            .unwrap();
        assert!((a - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn kolmogorov_examples() {
        let sym = validate_chain(
            &[
                vec![0.2, 0.5, 0.3],
                vec![0.5, 0.1, 0.4],
                vec![0.3, 0.4, 0.3],
            ],
            ChainKind::Dtmc,
        )
        .unwrap();
        assert!(kolmogorov_reversible(&sym, 3).reversible);

        let r = kolmogorov_reversible(&cyclic_ctmc(), 3);
        assert!(!r.reversible);
        assert_eq!(r.witness, Some(Cycle::new(&[0, 1, 2]).unwrap()));

        let bd = ctmc(&[
            vec![-1.0, 1.0, 0.0, 0.0],
            vec![2.0, -5.0, 3.0, 0.0],
            vec![0.0, 0.7, -1.1, 0.4],
            vec![0.0, 0.0, 9.0, -9.0],
        ]);
        assert!(kolmogorov_reversible(&bd, 4).reversible);
    }

    #[test]
    fn embedded_chain_is_valid() {
        let c = cyclic_ctmc();
        let e = c.as_ctmc().unwrap().embedded().unwrap();
        assert_eq!(e.p(0, 1), 1.0);
        assert_eq!(e.p(2, 0), 1.0);
    }

    #[test]
    fn stationary_distributions() {
        let c = cyclic_ctmc();
        let pi = c.stationary().unwrap();
        // flux balance around the ring: pi_0 * 1 = pi_1 * 2 = pi_2 * 3
        assert!((pi[0] - 2.0 * pi[1]).abs() < 1e-14);
        assert!((pi[0] - 3.0 * pi[2]).abs() < 1e-14);
        assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-14);
    }

    fn random_rate_matrix(n: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
        proptest::collection::vec(0.05f64..3.0, n * n).prop_map(move |v| {
            let mut rows = vec![vec![0.0; n]; n];
            for i in 0..n {
                let mut s = 0.0;
                for j in 0..n {
                    if i != j {
                        rows[i][j] = v[i * n + j];
                        s += rows[i][j];
                    }
                }
                rows[i][i] = -s;
            }
            rows
        })
    }

    proptest! {
        #[test]
        fn row_sums_and_embedding(rows in random_rate_matrix(4)) {
            let c = validate_chain(&rows, ChainKind::Ctmc).unwrap();
            for r in c.rows() {
                prop_assert!(r.iter().sum::<f64>().abs() <= 1e-12);
            }
            let e = c.as_ctmc().unwrap().embedded().unwrap();
            for i in 0..4 {
                let s: f64 = (0..4).map(|j| e.p(i, j)).sum();
                prop_assert!((s - 1.0).abs() <= 1e-12);
            }
        }

        #[test]
        fn strength_is_rotation_invariant(rows in random_rate_matrix(4), r in 0usize..4) {
            let c = validate_chain(&rows, ChainKind::Ctmc).unwrap();
            let raw = [2usize, 0, 3, 1];
            let rot: Vec<usize> = (0..4).map(|k| raw[(k + r) % 4]).collect();
            // strength computed from the raw circuit, no canonicalization
            let direct: f64 = (0..4).map(|k| c.weight(rot[k], rot[(k + 1) % 4])).product();
            let canon = cycle_strength(&c, &Cycle::new(&rot).unwrap()).unwrap();
            prop_assert!((direct - canon).abs() <= 1e-12 * direct);
        }

        #[test]
        fn kolmogorov_invariant_under_relabeling(
            rows in random_rate_matrix(4),
            perm in Just(vec![0usize, 1, 2, 3]).prop_shuffle(),
            reversible in any::<bool>(),
        ) {
            let rows = if reversible {
                // symmetric rates satisfy detailed balance
                let mut s = rows.clone();
                for i in 0..4 { for j in 0..4 { if i != j { s[i][j] = rows[i.min(j)][i.max(j)]; } } }
                for i in 0..4 { s[i][i] = -(0..4).filter(|&j| j != i).map(|j| s[i][j]).sum::<f64>(); }
                s
            } else { rows };
            let a = validate_chain(&rows, ChainKind::Ctmc).unwrap();
            let mut permuted = vec![vec![0.0; 4]; 4];
            for i in 0..4 { for j in 0..4 { permuted[perm[i]][perm[j]] = rows[i][j]; } }
            let b = validate_chain(&permuted, ChainKind::Ctmc).unwrap();
            let ra = kolmogorov_reversible(&a, 4);
            let rb = kolmogorov_reversible(&b, 4);
            prop_assert_eq!(ra.reversible, rb.reversible);
            if reversible { prop_assert!(ra.reversible); }
        }
    }
}
