//! Ratio, conditional-law and independence checks for the first cycle to
//! form out of a family.

use std::str::FromStr;

use serde::Serialize;

use super::report::{ser_f64, ser_opt_f64, CellRow};
use super::stats::{
    chi_square_independence, ks_two_sample, normal_quantile, ChiSquareResult, KsResult,
};
use crate::chain::{cycle_strength, ChainKind, ChainSpec, CtmcSpec};
use crate::cycle::Cycle;
use crate::error::{Error, Result};
use crate::exact::{
    check_family_start, exact_absorption, exact_forming_cdf, exact_forming_dist, pairwise_similar,
};
use crate::simulator::{batch_first_forming, FirstEvent};

/// Absolute tolerance of exact-mode comparisons.
pub const EXACT_TOL: f64 = 1e-10;
/// Buckets lighter than this are not used for ratios.
pub const MASS_FLOOR: f64 = 1e-12;
/// Family-wise significance level of statistical checks.
pub const ALPHA: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Exact,
    Mc,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "exact" => Ok(Mode::Exact),
            "mc" => Ok(Mode::Mc),
            other => Err(Error::InvalidArgument(format!(
                "mode must be exact or mc, got `{other}`"
            ))),
        }
    }
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Exact => "exact",
            Mode::Mc => "mc",
        }
    }
}

/// Whether the family is required to be pairwise similar, or only to pass
/// through the start state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyMode {
    Similar,
    Common,
}

impl FromStr for FamilyMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "similar" => Ok(FamilyMode::Similar),
            "common" => Ok(FamilyMode::Common),
            other => Err(Error::InvalidArgument(format!(
                "family mode must be similar or common, got `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HaldaneParams {
    pub mode: Mode,
    pub family_mode: FamilyMode,
    /// DTMC exact horizon.
    pub n_max: usize,
    /// CTMC exact evaluation times; a default ladder when `None`.
    pub times: Option<Vec<f64>>,
    pub replicas: usize,
    pub seed: u64,
    /// Worker threads (0 = all cores). Not part of the inputs digest.
    #[serde(skip)]
    pub workers: usize,
    /// Replicas still unformed after this many jumps are dropped.
    pub max_steps: usize,
    pub alpha: f64,
}

impl Default for HaldaneParams {
    fn default() -> Self {
        Self {
            mode: Mode::Exact,
            family_mode: FamilyMode::Similar,
            n_max: 40,
            times: None,
            replicas: 100_000,
            seed: 0,
            workers: 0,
            max_steps: 1_000_000,
            alpha: ALPHA,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FormingProbability {
    pub cycle: String,
    #[serde(serialize_with = "ser_f64")]
    pub estimate: f64,
    /// Standard error (mc mode).
    #[serde(serialize_with = "ser_opt_f64")]
    pub se: Option<f64>,
    /// Exact `P(T = T^c)` when the oracle could be built.
    #[serde(serialize_with = "ser_opt_f64")]
    pub oracle: Option<f64>,
    /// `|estimate - oracle| <= 4 sd` (mc mode).
    pub within_4_sigma: Option<bool>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConditionalComparison {
    /// Largest gap between the two conditional laws.
    Exact {
        max_abs_difference: f64,
    },
    Ks(KsResult),
}

#[derive(Debug, Clone, Serialize)]
pub struct PairResult {
    pub k: usize,
    pub l: usize,
    /// Target `gamma_k / gamma_l`.
    #[serde(serialize_with = "ser_f64")]
    pub theoretical_ratio: f64,
    #[serde(serialize_with = "ser_f64")]
    pub estimated_ratio: f64,
    /// Confidence interval for the ratio (mc mode).
    pub ci: Option<[f64; 2]>,
    /// Largest absolute deviation of per-time ratios from the target (exact mode).
    #[serde(serialize_with = "ser_opt_f64")]
    pub max_ratio_deviation: Option<f64>,
    pub conditional: ConditionalComparison,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct IndependenceResult {
    pub mode: Mode,
    /// `max |P(T = n, xi = k) - P(T = n) P(xi = k)|` (exact mode).
    pub max_residual: Option<f64>,
    pub chi_square: Option<ChiSquareResult>,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct HaldaneReport {
    pub chain_kind: ChainKind,
    pub mode: Mode,
    pub family_mode: FamilyMode,
    pub family: Vec<String>,
    pub start: String,
    #[serde(serialize_with = "super::report::ser_vec_f64")]
    pub strengths: Vec<f64>,
    pub forming: Vec<FormingProbability>,
    pub pairs: Vec<PairResult>,
    /// Present when the family is pairwise similar.
    pub independence: Option<IndependenceResult>,
    /// Time points (CTMC exact) or step horizon (DTMC exact) used.
    pub exact_times: Option<Vec<f64>>,
    pub replicas: Option<usize>,
    /// Replicas that formed no watched cycle within `max_steps` jumps.
    pub unformed: Option<usize>,
    pub alpha: f64,
    pub pass: bool,
}

impl HaldaneReport {
    pub fn cells(&self) -> Vec<CellRow> {
        let mut rows: Vec<CellRow> = self
            .pairs
            .iter()
            .map(|p| CellRow {
                section: "ratio".into(),
                key: format!("{}/{}", self.family[p.k], self.family[p.l]),
                observed: p.estimated_ratio,
                target: p.theoretical_ratio,
                residual: p.estimated_ratio - p.theoretical_ratio,
                bound: match (p.ci, p.max_ratio_deviation) {
                    (Some([lo, hi]), _) => (hi - lo) / 2.0,
                    _ => EXACT_TOL,
                },
            })
            .collect();
        for f in &self.forming {
            if let Some(o) = f.oracle {
                rows.push(CellRow {
                    section: "forming".into(),
                    key: f.cycle.clone(),
                    observed: f.estimate,
                    target: o,
                    residual: f.estimate - o,
                    bound: f.se.map_or(EXACT_TOL, |s| 4.0 * s),
                });
            }
        }
        rows
    }
}

/// Checks the family against the mode and returns the pairs `(k, l)` whose
/// ratios are tested.
pub fn check_family(
    chain: &ChainSpec,
    family: &[Cycle],
    start: usize,
    family_mode: FamilyMode,
) -> Result<Vec<(usize, usize)>> {
    let size = chain.size();
    if start >= size {
        return Err(Error::StateOutOfRange { index: start, size });
    }
    for c in family {
        if let Some(&s) = c.states().iter().find(|&&s| s >= size) {
            return Err(Error::StateOutOfRange { index: s, size });
        }
    }
    let states = chain.states();
    if family_mode == FamilyMode::Similar {
        for k in 0..family.len() {
            for l in k + 1..family.len() {
                if !family[k].is_similar(&family[l]) {
                    return Err(Error::NotSimilar(
                        family[k].format(states),
                        family[l].format(states),
                    ));
                }
            }
        }
    }
    check_family_start(family, start, family_mode == FamilyMode::Common)?;
    let mut pairs = Vec::new();
    for k in 0..family.len() {
        for l in k + 1..family.len() {
            if family[k].is_similar(&family[l]) {
                pairs.push((k, l));
            }
        }
    }
    Ok(pairs)
}

/// Default CTMC evaluation times: a doubling ladder in units of the
/// shortest mean holding time.
fn default_times(chain: &CtmcSpec) -> Vec<f64> {
    let tau = 1.0 / chain.max_exit_rate();
    (0..8).map(|k| tau * 2f64.powi(k)).collect()
}

/// Per-time joint masses `P(T in bin_n, xi = k)` and exact `P(xi = k)`.
struct ExactTable {
    joint: Vec<Vec<f64>>,
    absorption: Vec<f64>,
    times: Vec<f64>,
}

fn exact_table(
    chain: &ChainSpec,
    family: &[Cycle],
    start: usize,
    params: &HaldaneParams,
) -> Result<ExactTable> {
    match chain {
        ChainSpec::Dtmc(d) => {
            let fd = exact_forming_dist(d, family, start, params.n_max)?;
            Ok(ExactTable {
                joint: fd.buckets,
                absorption: fd.absorption,
                times: (0..=params.n_max).map(|n| n as f64).collect(),
            })
        }
        ChainSpec::Ctmc(c) => {
            let times = params.times.clone().unwrap_or_else(|| default_times(c));
            let fc = exact_forming_cdf(c, family, start, &times)?;
            Ok(ExactTable {
                joint: fc.cdf,
                absorption: fc.absorption,
                times,
            })
        }
    }
}

fn ratio_deviation(a: &[f64], b: &[f64], target: f64) -> f64 {
    a.iter()
        .zip(b)
        .filter(|(x, y)| **x > MASS_FLOOR || **y > MASS_FLOOR)
        .map(|(x, y)| {
            if *y > 0.0 {
                (x / y - target).abs()
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0, f64::max)
}

fn normalized(v: &[f64], total: f64) -> Vec<f64> {
    v.iter()
        .map(|x| if total > 0.0 { x / total } else { 0.0 })
        .collect()
}

fn exact_pair(table: &ExactTable, strengths: &[f64], k: usize, l: usize) -> PairResult {
    let (gk, gl) = (strengths[k], strengths[l]);
    let theoretical_ratio = gk / gl;
    let estimated_ratio = table.absorption[k] / table.absorption[l];
    let (max_ratio_deviation, ratio_ok) = if gk > 0.0 && gl > 0.0 {
        let d = ratio_deviation(&table.joint[k], &table.joint[l], theoretical_ratio);
        (Some(d), d <= EXACT_TOL)
    } else {
        // a zero-strength cycle never forms
        let zero_ok = (gk > 0.0 || table.joint[k].iter().all(|&x| x == 0.0))
            && (gl > 0.0 || table.joint[l].iter().all(|&x| x == 0.0));
        (None, zero_ok)
    };
    // conditional laws, normalised by the exact forming probabilities
    let ck = normalized(&table.joint[k], table.absorption[k]);
    let cl = normalized(&table.joint[l], table.absorption[l]);
    let gap = if gk > 0.0 && gl > 0.0 {
        ck.iter()
            .zip(&cl)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    } else {
        0.0
    };
    PairResult {
        k,
        l,
        theoretical_ratio,
        estimated_ratio,
        ci: None,
        max_ratio_deviation,
        conditional: ConditionalComparison::Exact {
            max_abs_difference: gap,
        },
        pass: ratio_ok && gap <= EXACT_TOL,
    }
}

fn exact_independence(table: &ExactTable) -> IndependenceResult {
    let len = table.times.len();
    let marginal: Vec<f64> = (0..len)
        .map(|n| table.joint.iter().map(|b| b[n]).sum())
        .collect();
    let mut worst: f64 = 0.0;
    for (b, &p) in table.joint.iter().zip(&table.absorption) {
        for n in 0..len {
            worst = worst.max((b[n] - marginal[n] * p).abs());
        }
    }
    IndependenceResult {
        mode: Mode::Exact,
        max_residual: Some(worst),
        chi_square: None,
        pass: worst <= EXACT_TOL,
    }
}

fn event_time(kind: ChainKind, e: &FirstEvent) -> f64 {
    match kind {
        ChainKind::Dtmc => e.step as f64,
        ChainKind::Ctmc => e.time,
    }
}

/// Contingency table of (quantile bin of T, index of the first cycle).
fn binned_table(events: &[&FirstEvent], kind: ChainKind, r: usize) -> Vec<Vec<f64>> {
    let mut times: Vec<f64> = events.iter().map(|e| event_time(kind, e)).collect();
    times.sort_by(f64::total_cmp);
    let bins = (events.len() / 200).clamp(2, 10);
    let mut edges: Vec<f64> = (1..bins).map(|b| times[b * times.len() / bins]).collect();
    edges.dedup();
    let mut table = vec![vec![0.0; r]; edges.len() + 1];
    for e in events {
        let t = event_time(kind, e);
        let row = edges.partition_point(|&x| x <= t);
        table[row][e.index] += 1.0;
    }
    table
}

/// Forming probabilities, pair results, independence and the unformed count.
type McOutcome = (
    Vec<FormingProbability>,
    Vec<PairResult>,
    Option<IndependenceResult>,
    usize,
);

fn mc_parts(
    chain: &ChainSpec,
    family: &[Cycle],
    start: usize,
    pairs: &[(usize, usize)],
    strengths: &[f64],
    independence: bool,
    params: &HaldaneParams,
) -> Result<McOutcome> {
    if params.replicas < 2 {
        return Err(Error::InvalidArgument(
            "mc mode needs at least 2 replicas".into(),
        ));
    }
    let firsts = batch_first_forming(
        chain,
        start,
        family,
        params.replicas,
        params.seed,
        params.workers,
        params.max_steps,
    )?;
    let formed: Vec<&FirstEvent> = firsts.iter().flatten().collect();
    let unformed = firsts.len() - formed.len();
    let n = formed.len() as f64;
    let kind = chain.kind();
    let r = family.len();
    let mut counts = vec![0usize; r];
    let mut times = vec![Vec::new(); r];
    for e in &formed {
        counts[e.index] += 1;
        times[e.index].push(event_time(kind, e));
    }
    let oracle = exact_absorption(chain, family, start).ok();
    let states = chain.states();
    let forming = (0..r)
        .map(|k| {
            let p = counts[k] as f64 / n;
            let o = oracle.as_ref().map(|v| v[k]);
            FormingProbability {
                cycle: family[k].format(states),
                estimate: p,
                se: Some((p * (1.0 - p) / n).sqrt()),
                oracle: o,
                within_4_sigma: o
                    .map(|o| (p - o).abs() <= 4.0 * (o * (1.0 - o) / n).sqrt() + 1e-15),
            }
        })
        .collect();

    let tests = 2 * pairs.len() + usize::from(independence && r > 1);
    let level = params.alpha / tests.max(1) as f64;
    let z = normal_quantile(1.0 - level / 2.0);
    let pair_results = pairs
        .iter()
        .map(|&(k, l)| {
            let theoretical_ratio = strengths[k] / strengths[l];
            let (nk, nl) = (counts[k] as f64, counts[l] as f64);
            let estimated_ratio = nk / nl;
            let (ci, ratio_ok) = if nk > 0.0 && nl > 0.0 {
                let half = z * (1.0 / nk + 1.0 / nl).sqrt();
                let lr = estimated_ratio.ln();
                let ci = [(lr - half).exp(), (lr + half).exp()];
                (
                    Some(ci),
                    ci[0] <= theoretical_ratio && theoretical_ratio <= ci[1],
                )
            } else {
                // only consistent when the missing cycle cannot form
                (
                    None,
                    (nk > 0.0 || strengths[k] == 0.0) && (nl > 0.0 || strengths[l] == 0.0),
                )
            };
            let ks = ks_two_sample(&times[k], &times[l]);
            PairResult {
                k,
                l,
                theoretical_ratio,
                estimated_ratio,
                ci,
                max_ratio_deviation: None,
                pass: ratio_ok && ks.p_value >= level,
                conditional: ConditionalComparison::Ks(ks),
            }
        })
        .collect();
    let indep = independence.then(|| {
        if r < 2 {
            return IndependenceResult {
                mode: Mode::Mc,
                max_residual: None,
                chi_square: None,
                pass: true,
            };
        }
        let chi = chi_square_independence(&binned_table(&formed, kind, r));
        IndependenceResult {
            mode: Mode::Mc,
            max_residual: None,
            pass: chi.p_value >= level,
            chi_square: Some(chi),
        }
    });
    Ok((forming, pair_results, indep, unformed))
}

/// Ratio and conditional-law checks for the first cycle of `family` to form.
pub fn haldane_test(
    chain: &ChainSpec,
    family: &[Cycle],
    start: usize,
    params: &HaldaneParams,
) -> Result<HaldaneReport> {
    let pairs = check_family(chain, family, start, params.family_mode)?;
    let strengths = family
        .iter()
        .map(|c| cycle_strength(chain, c))
        .collect::<Result<Vec<_>>>()?;
    let similar = pairwise_similar(family);
    let states = chain.states();
    let (forming, pair_results, independence, exact_times, replicas, unformed) = match params.mode {
        Mode::Exact => {
            let table = exact_table(chain, family, start, params)?;
            let forming = family
                .iter()
                .zip(&table.absorption)
                .map(|(c, &p)| FormingProbability {
                    cycle: c.format(states),
                    estimate: p,
                    se: None,
                    oracle: Some(p),
                    within_4_sigma: None,
                })
                .collect();
            let pr = pairs
                .iter()
                .map(|&(k, l)| exact_pair(&table, &strengths, k, l))
                .collect();
            let indep = similar.then(|| exact_independence(&table));
            (forming, pr, indep, Some(table.times), None, None)
        }
        Mode::Mc => {
            let (f, p, i, u) = mc_parts(chain, family, start, &pairs, &strengths, similar, params)?;
            (f, p, i, None, Some(params.replicas), Some(u))
        }
    };
    let pass = pair_results.iter().all(|p: &PairResult| p.pass)
        && independence.as_ref().is_none_or(|i| i.pass)
        && forming
            .iter()
            .all(|f: &FormingProbability| f.within_4_sigma.unwrap_or(true));
    Ok(HaldaneReport {
        chain_kind: chain.kind(),
        mode: params.mode,
        family_mode: params.family_mode,
        family: family.iter().map(|c| c.format(states)).collect(),
        start: states.label(start).to_string(),
        strengths,
        forming,
        pairs: pair_results,
        independence,
        exact_times,
        replicas,
        unformed,
        alpha: params.alpha,
        pass,
    })
}

/// Independence of the forming time and the identity of the first cycle
/// for a similar family.
pub fn independence_test(
    chain: &ChainSpec,
    family: &[Cycle],
    start: usize,
    params: &HaldaneParams,
) -> Result<IndependenceResult> {
    check_family(chain, family, start, FamilyMode::Similar)?;
    match params.mode {
        Mode::Exact => Ok(exact_independence(&exact_table(
            chain, family, start, params,
        )?)),
        Mode::Mc => {
            let (_, _, indep, _) = mc_parts(chain, family, start, &[], &[], true, params)?;
            Ok(indep.expect("requested"))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::validate_chain;
    use crate::cycle::parse_cycle_list;

    fn mm_single() -> ChainSpec {
        validate_chain(
            &[
                vec![-2.5, 2.0, 0.5],
                vec![1.0, -4.0, 3.0],
                vec![2.0, 1.0, -3.0],
            ],
            ChainKind::Ctmc,
        )
        .unwrap()
    }

    fn four_state() -> ChainSpec {
        let rows = vec![
            vec![0.1, 0.4, 0.3, 0.2],
            vec![0.25, 0.05, 0.5, 0.2],
            vec![0.3, 0.3, 0.1, 0.3],
            vec![0.6, 0.1, 0.2, 0.1],
        ];
        validate_chain(&rows, ChainKind::Dtmc).unwrap()
    }

    fn family(chain: &ChainSpec, text: &str) -> Vec<Cycle> {
        parse_cycle_list(text, chain.states()).unwrap()
    }

    #[test]
    fn family_rules() {
        let c = four_state();
        let f = family(&c, "(0,1,2),(0,1)");
        let err = check_family(&c, &f, 0, FamilyMode::Similar).unwrap_err();
        assert!(matches!(err, Error::NotSimilar(_, _)));
        assert_eq!(check_family(&c, &f, 0, FamilyMode::Common).unwrap(), vec![]);
        assert_eq!(
            check_family(&c, &f, 2, FamilyMode::Common),
            Err(Error::StartNotCommon { start: 2 })
        );
        let g = family(&c, "(1,2),(0,3)");
        assert_eq!(
            check_family(&c, &g, 0, FamilyMode::Common),
            Err(Error::NoCommonState)
        );
        let h = family(&c, "(0,1,2),(0,2,1)");
        assert_eq!(
            check_family(&c, &h, 3, FamilyMode::Similar).unwrap(),
            vec![(0, 1)]
        );
    }

    #[test]
    fn exact_dtmc_family() {
        let c = four_state();
        let f = family(
            &c,
            "(0,1,2,3),(0,1,3,2),(0,2,1,3),(0,2,3,1),(0,3,1,2),(0,3,2,1)",
        );
        let rep = haldane_test(&c, &f, 1, &HaldaneParams::default()).unwrap();
        assert!(rep.pass, "{rep:#?}");
        assert_eq!(rep.pairs.len(), 15);
        for p in &rep.pairs {
            assert_eq!(p.theoretical_ratio, rep.strengths[p.k] / rep.strengths[p.l]);
            assert!((p.estimated_ratio - p.theoretical_ratio).abs() < 1e-10);
        }
        assert!(rep.independence.unwrap().max_residual.unwrap() <= 1e-10);
    }

    #[test]
    fn exact_ctmc_conjugate_pair() {
        let c = mm_single();
        let f = family(&c, "(0,1,2),(0,2,1)");
        let rep = haldane_test(&c, &f, 0, &HaldaneParams::default()).unwrap();
        assert!(rep.pass, "{rep:#?}");
        assert!((rep.pairs[0].theoretical_ratio - 24.0).abs() < 1e-12);
        let total: f64 = rep.forming.iter().map(|f| f.estimate).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!((rep.forming[0].estimate - 24.0 / 25.0).abs() < 1e-12);
    }

    #[test]
    fn common_mode_only_compares_similar_pairs() {
        let c = four_state();
        let f = family(&c, "(0,1),(0,1,2),(0,2,1),(0)");
        let params = HaldaneParams {
            family_mode: FamilyMode::Common,
            ..HaldaneParams::default()
        };
        let rep = haldane_test(&c, &f, 0, &params).unwrap();
        assert_eq!(rep.pairs.len(), 1);
        assert!(rep.pass);
        assert!(rep.independence.is_none());
    }

    #[test]
    fn mc_matches_oracle_on_ctmc() {
        let c = mm_single();
        let f = family(&c, "(0,1,2),(0,2,1)");
        let params = HaldaneParams {
            mode: Mode::Mc,
            replicas: 4000,
            seed: 11,
            workers: 2,
            ..HaldaneParams::default()
        };
        let rep = haldane_test(&c, &f, 0, &params).unwrap();
        assert!(rep.pass, "{rep:#?}");
        assert_eq!(rep.unformed, Some(0));
        let ci = rep.pairs[0].ci.unwrap();
        assert!(ci[0] < 24.0 && 24.0 < ci[1]);
    }

    #[test]
    fn singleton_family_is_independent() {
        let c = four_state();
        let f = family(&c, "(0,1,2)");
        let params = HaldaneParams {
            mode: Mode::Mc,
            replicas: 500,
            ..HaldaneParams::default()
        };
        let r = independence_test(&c, &f, 0, &params).unwrap();
        assert!(r.pass);
        let r = independence_test(&c, &f, 0, &HaldaneParams::default()).unwrap();
        assert!(r.max_residual.unwrap() <= 1e-15);
    }
}
