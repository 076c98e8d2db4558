//! Transient, integral and generating-function symmetries of net cycle
//! counts.

use serde::Serialize;

use super::haldane::Mode;
use super::legendre::ProductGrid;
use super::report::{ser_f64, ser_opt_f64, CellRow};
use super::stats::{mean_se, normal_quantile};
use crate::chain::{cycle_affinity, cycle_strength, ChainKind, ChainSpec};
use crate::cycle::Cycle;
use crate::error::{Error, Result};
use crate::exact::{exact_count_dist, exact_generating, CountDistribution};
use crate::numeric::KahanSum;
use crate::simulator::{batch_sample, BatchConfig, Horizon};

/// Cells lighter than this are not compared.
pub const MASS_FLOOR: f64 = 1e-12;
/// Tolerance of the slope and intercept fits.
pub const SLOPE_TOL: f64 = 1e-8;
/// Smallest truncation level used when scaling exact tolerances.
pub const EPS_FLOOR: f64 = 1e-14;

/// Largest exponent accepted in generating-function sums.
const MAX_EXPONENT: f64 = 700.0;

/// Exact-check tolerance for a truncated lattice.
pub fn exact_bound(eps_trunc: f64) -> f64 {
    10.0 * eps_trunc.max(EPS_FLOOR)
}

#[derive(Debug, Clone, Serialize)]
pub struct SkippedCycle {
    pub cycle: String,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct WatchedCycle {
    pub cycle: String,
    pub reverse: String,
    #[serde(serialize_with = "ser_f64")]
    pub rho: f64,
}

/// Splits a family into cycles with a finite, nonzero-information affinity
/// and those that must be skipped.
pub fn usable_cycles(
    chain: &ChainSpec,
    family: &[Cycle],
) -> Result<(Vec<Cycle>, Vec<f64>, Vec<SkippedCycle>)> {
    let states = chain.states();
    let mut kept = Vec::new();
    let mut rho = Vec::new();
    let mut skipped = Vec::new();
    for (k, c) in family.iter().enumerate() {
        let rev = c.reversed();
        if family[..k].contains(c) || (family[..k].contains(&rev) && rev != *c) {
            return Err(Error::InvalidArgument(format!(
                "cycle {} or its reversal is listed twice",
                c.format(states)
            )));
        }
        if rev == *c {
            skipped.push(SkippedCycle {
                cycle: c.format(states),
                reason: "self-conjugate: net count is identically zero".into(),
            });
            continue;
        }
        let infinite = match cycle_affinity(chain, c) {
            Ok(a) => a.finite(),
            Err(Error::ZeroForwardStrength) => {
                // the reversal is the one-directional cycle
                if cycle_strength(chain, &rev)? > 0.0 {
                    None
                } else {
                    return Err(Error::ZeroForwardStrength);
                }
            }
            Err(e) => return Err(e),
        };
        match infinite {
            Some(r) => {
                kept.push(c.clone());
                rho.push(r);
            }
            None => skipped.push(SkippedCycle {
                cycle: c.format(states),
                reason: "infinite affinity: one orientation has zero strength".into(),
            }),
        }
    }
    if kept.is_empty() {
        let names: Vec<String> = skipped.iter().map(|s| s.cycle.clone()).collect();
        return Err(Error::InfiniteAffinity(names.join(",")));
    }
    Ok((kept, rho, skipped))
}

/// Exact joint law of net counts `N^{c_k} - N^{c_k-}` on `[-cap, cap]^r`.
#[derive(Debug, Clone, Serialize)]
pub struct NetLaw {
    pub cycles: Vec<Cycle>,
    pub rho: Vec<f64>,
    pub cap: usize,
    /// Row-major over offsets `n_k + cap`, first cycle slowest.
    #[serde(skip)]
    pub probs: Vec<f64>,
    pub eps_trunc: f64,
}

impl NetLaw {
    pub fn dim(&self) -> usize {
        self.cycles.len()
    }

    fn side(&self) -> usize {
        2 * self.cap + 1
    }

    pub fn index(&self, net: &[i64]) -> Option<usize> {
        let c = self.cap as i64;
        let mut idx = 0;
        for &n in net {
            if n.abs() > c {
                return None;
            }
            idx = idx * self.side() + (n + c) as usize;
        }
        Some(idx)
    }

    pub fn decode(&self, mut idx: usize) -> Vec<i64> {
        let mut out = vec![0; self.dim()];
        for k in (0..self.dim()).rev() {
            out[k] = (idx % self.side()) as i64 - self.cap as i64;
            idx /= self.side();
        }
        out
    }

    pub fn prob(&self, net: &[i64]) -> f64 {
        self.index(net).map_or(0.0, |i| self.probs[i])
    }

    /// Law of the `k`-th net count, indexed by `n + cap`.
    pub fn marginal(&self, k: usize) -> Vec<f64> {
        let mut acc = vec![KahanSum::new(); self.side()];
        for (i, &p) in self.probs.iter().enumerate() {
            acc[(self.decode(i)[k] + self.cap as i64) as usize].add(p);
        }
        acc.iter().map(KahanSum::value).collect()
    }

    /// `E exp(lambda . n)` over the lattice.
    pub fn generating(&self, lambda: &[f64]) -> Result<f64> {
        if lambda.len() != self.dim() {
            return Err(Error::InvalidArgument("lambda has the wrong length".into()));
        }
        let reach: f64 = lambda.iter().map(|l| l.abs() * self.cap as f64).sum();
        if reach > MAX_EXPONENT || lambda.iter().any(|l| !l.is_finite()) {
            return Err(Error::Overflow);
        }
        let mut acc = KahanSum::new();
        for (i, &p) in self.probs.iter().enumerate() {
            if p != 0.0 {
                let e: f64 = self
                    .decode(i)
                    .iter()
                    .zip(lambda)
                    .map(|(&n, l)| n as f64 * l)
                    .sum();
                acc.add(p * e.exp());
            }
        }
        Ok(acc.value())
    }
}

/// Convolves the joint count law of `(c_1, c_1-, c_2, c_2-, ...)` into net
/// counts. All cycles share the cap.
pub fn net_law(
    chain: &ChainSpec,
    cycles: &[Cycle],
    rho: &[f64],
    start: usize,
    horizon: Horizon,
    cap: usize,
) -> Result<NetLaw> {
    let mut expanded = Vec::with_capacity(2 * cycles.len());
    for c in cycles {
        expanded.push(c.clone());
        expanded.push(c.reversed());
    }
    let caps = vec![cap; expanded.len()];
    let dist = exact_count_dist(chain, &expanded, start, horizon, &caps)?;
    let side = 2 * cap + 1;
    let mut law = NetLaw {
        cycles: cycles.to_vec(),
        rho: rho.to_vec(),
        cap,
        probs: Vec::new(),
        eps_trunc: dist.eps_trunc,
    };
    let mut acc = vec![KahanSum::new(); side.pow(cycles.len() as u32)];
    for (cell, p) in dist.lattice().into_iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let n = dist.decode(cell);
        let net: Vec<i64> = n.chunks(2).map(|w| w[0] as i64 - w[1] as i64).collect();
        acc[law.index(&net).expect("within caps")].add(p);
    }
    law.probs = acc.iter().map(KahanSum::value).collect();
    Ok(law)
}

#[derive(Debug, Clone, Serialize)]
pub struct TransientCell {
    pub k: usize,
    pub net: Vec<i64>,
    pub log_ratio: f64,
    pub target: f64,
    pub residual: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SlopeFit {
    pub cycle: String,
    pub points: usize,
    #[serde(serialize_with = "ser_opt_f64")]
    pub slope: Option<f64>,
    #[serde(serialize_with = "ser_opt_f64")]
    pub intercept: Option<f64>,
    pub rho: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct TransientSection {
    pub target_formula: &'static str,
    pub cells: Vec<TransientCell>,
    pub max_residual: f64,
    pub slopes: Vec<SlopeFit>,
    pub pass: bool,
}

fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Per-cell log ratios `log P(n) / P(n with n_k negated)` against `n_k rho_k`,
/// and a linear fit of the marginal log ratios in `n_k`.
pub fn transient_ft(law: &NetLaw, states: &crate::chain::StateSpace) -> TransientSection {
    let floor = law.eps_trunc.max(EPS_FLOOR);
    let mut cells = Vec::new();
    for (i, &p) in law.probs.iter().enumerate() {
        let net = law.decode(i);
        for k in 0..law.dim() {
            if net[k] <= 0 {
                continue;
            }
            let mut mirror = net.clone();
            mirror[k] = -net[k];
            let q = law.prob(&mirror);
            let low = p.min(q);
            if low <= MASS_FLOOR {
                continue;
            }
            let log_ratio = (p / q).ln();
            let target = net[k] as f64 * law.rho[k];
            cells.push(TransientCell {
                k,
                net: net.clone(),
                log_ratio,
                target,
                residual: (log_ratio - target).abs(),
                bound: 10.0 * floor / low,
            });
        }
    }
    let slopes: Vec<SlopeFit> = (0..law.dim())
        .map(|k| {
            let m = law.marginal(k);
            let c = law.cap;
            let (mut xs, mut ys) = (Vec::new(), Vec::new());
            for n in 1..=c {
                let (a, b) = (m[c + n], m[c - n]);
                if a > MASS_FLOOR && b > MASS_FLOOR {
                    xs.push(n as f64);
                    ys.push((a / b).ln());
                }
            }
            let rho = law.rho[k];
            let (slope, intercept, pass) = match xs.len() {
                0 => (None, None, true),
                1 => {
                    let s = ys[0] / xs[0];
                    (Some(s), None, (s - rho).abs() <= SLOPE_TOL)
                }
                _ => {
                    let (s, a) = least_squares(&xs, &ys);
                    (
                        Some(s),
                        Some(a),
                        (s - rho).abs() <= SLOPE_TOL && a.abs() <= SLOPE_TOL,
                    )
                }
            };
            SlopeFit {
                cycle: law.cycles[k].format(states),
                points: xs.len(),
                slope,
                intercept,
                rho,
                pass,
            }
        })
        .collect();
    let max_residual = cells.iter().map(|c| c.residual).fold(0.0, f64::max);
    let pass = cells.iter().all(|c| c.residual <= c.bound) && slopes.iter().all(|s| s.pass);
    TransientSection {
        target_formula: "log P(K=n)/P(K_k=-n_k) = n_k * rho_k",
        cells,
        max_residual,
        slopes,
        pass,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct IntegralSection {
    pub target_formula: &'static str,
    pub mode: Mode,
    #[serde(serialize_with = "ser_f64")]
    pub estimate: f64,
    /// Allowed deviation from 1 (exact mode).
    #[serde(serialize_with = "ser_opt_f64")]
    pub bound: Option<f64>,
    #[serde(serialize_with = "ser_opt_f64")]
    pub se: Option<f64>,
    /// 99% confidence interval (mc mode).
    pub ci: Option<[f64; 2]>,
    pub replicas: Option<usize>,
    pub pass: bool,
}

const INTEGRAL_FORMULA: &str = "E exp(-sum_k rho_k (N^c_k - N^c_k-)) = 1";

/// Lattice sum of `exp(-sum_k rho_k n_k)`.
pub fn integral_ft_exact(law: &NetLaw) -> IntegralSection {
    let mut acc = KahanSum::new();
    for (i, &p) in law.probs.iter().enumerate() {
        if p != 0.0 {
            let e: f64 = law
                .decode(i)
                .iter()
                .zip(&law.rho)
                .map(|(&n, r)| n as f64 * r)
                .sum();
            acc.add(p * (-e).exp());
        }
    }
    let estimate = acc.value();
    let bound = exact_bound(law.eps_trunc);
    IntegralSection {
        target_formula: INTEGRAL_FORMULA,
        mode: Mode::Exact,
        estimate,
        bound: Some(bound),
        se: None,
        ci: None,
        replicas: None,
        pass: (estimate - 1.0).abs() <= bound,
    }
}

/// Replica mean of `exp(-sum_k rho_k (N^{c_k} - N^{c_k-}))` with a 99% CI.
#[allow(clippy::too_many_arguments)]
pub fn integral_ft_mc(
    chain: &ChainSpec,
    cycles: &[Cycle],
    rho: &[f64],
    start: usize,
    horizon: Horizon,
    replicas: usize,
    seed: u64,
    workers: usize,
) -> Result<IntegralSection> {
    let config = BatchConfig {
        start,
        horizon,
        replicas,
        seed,
        workers,
        cycles: cycles.to_vec(),
        record_events: false,
    };
    let values: Vec<f64> = batch_sample(chain, &config)?
        .iter()
        .map(|r| {
            let e: f64 = r
                .sample
                .net_counts()
                .iter()
                .zip(rho)
                .map(|(&n, r)| n as f64 * r)
                .sum();
            (-e).exp()
        })
        .collect();
    let (mean, se) = mean_se(&values);
    let z = normal_quantile(0.995);
    let ci = [mean - z * se, mean + z * se];
    Ok(IntegralSection {
        target_formula: INTEGRAL_FORMULA,
        mode: Mode::Mc,
        estimate: mean,
        bound: None,
        se: Some(se),
        ci: Some(ci),
        replicas: Some(replicas),
        pass: ci[0] <= 1.0 && 1.0 <= ci[1],
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SymmetryRow {
    pub lambda: Vec<f64>,
    pub mirrored: Vec<f64>,
    pub value: f64,
    pub mirrored_value: f64,
    pub residual: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SymmetrySection {
    pub target_formula: String,
    pub rows: Vec<SymmetryRow>,
    pub max_residual: f64,
    pub pass: bool,
}

fn symmetry_section(formula: String, rows: Vec<SymmetryRow>) -> SymmetrySection {
    SymmetrySection {
        target_formula: formula,
        max_residual: rows.iter().map(|r| r.residual).fold(0.0, f64::max),
        pass: rows.iter().all(|r| r.residual <= r.bound),
        rows,
    }
}

fn symmetry_row(lambda: Vec<f64>, mirrored: Vec<f64>, a: f64, b: f64, eps: f64) -> SymmetryRow {
    SymmetryRow {
        residual: (a - b).abs(),
        bound: exact_bound(eps) * a.abs().max(b.abs()).max(1.0),
        lambda,
        mirrored,
        value: a,
        mirrored_value: b,
    }
}

/// `h(lambda)` against `h` with `lambda_k` replaced by `-(lambda_k + rho_k)`,
/// for every grid point and every `k`.
pub fn klsp_check(law: &NetLaw, grid: &ProductGrid) -> Result<SymmetrySection> {
    if grid.dim() != law.dim() {
        return Err(Error::InvalidArgument(format!(
            "lambda grid has {} axes for {} cycles",
            grid.dim(),
            law.dim()
        )));
    }
    let mut rows = Vec::new();
    for lambda in grid.points() {
        let a = law.generating(&lambda)?;
        for k in 0..law.dim() {
            let mut m = lambda.clone();
            m[k] = -(lambda[k] + law.rho[k]);
            let b = law.generating(&m)?;
            rows.push(symmetry_row(lambda.clone(), m, a, b, law.eps_trunc));
        }
    }
    Ok(symmetry_section(
        "h(lambda) = h(lambda with lambda_k -> -(lambda_k + rho_k))".into(),
        rows,
    ))
}

/// Generating function of counts of a similar pair `(k, l)`:
/// `g(lambda)` against `g` with `lambda_k -> lambda_l - L`, `lambda_l -> lambda_k + L`,
/// `L = log(gamma_k / gamma_l)`.
pub fn generating_symmetry_check(
    chain: &ChainSpec,
    dist: &CountDistribution,
    pair: (usize, usize),
    grid: &ProductGrid,
) -> Result<SymmetrySection> {
    let (k, l) = pair;
    let r = dist.cycles.len();
    if k >= r || l >= r || k == l {
        return Err(Error::InvalidArgument(format!("bad pair ({k}, {l})")));
    }
    let (ck, cl) = (&dist.cycles[k], &dist.cycles[l]);
    if !ck.is_similar(cl) {
        let s = chain.states();
        return Err(Error::NotSimilar(ck.format(s), cl.format(s)));
    }
    if dist.caps[k] != dist.caps[l] {
        return Err(Error::InvalidArgument("the pair needs equal caps".into()));
    }
    if grid.dim() != r {
        return Err(Error::InvalidArgument(format!(
            "lambda grid has {} axes for {r} cycles",
            grid.dim()
        )));
    }
    let (gk, gl) = (cycle_strength(chain, ck)?, cycle_strength(chain, cl)?);
    if !(gk > 0.0 && gl > 0.0) {
        return Err(Error::InfiniteAffinity(format!(
            "{}/{}",
            ck.format(chain.states()),
            cl.format(chain.states())
        )));
    }
    let shift = (gk / gl).ln();
    let mut rows = Vec::new();
    for lambda in grid.points() {
        let mut m = lambda.clone();
        m[k] = lambda[l] - shift;
        m[l] = lambda[k] + shift;
        let a = exact_generating(dist, &lambda)?.value;
        let b = exact_generating(dist, &m)?.value;
        rows.push(symmetry_row(lambda, m, a, b, dist.eps_trunc));
    }
    Ok(symmetry_section(
        "g(lambda) = g(lambda with lambda_k -> lambda_l - L, lambda_l -> lambda_k + L), L = log(gamma_k/gamma_l)".into(),
        rows,
    ))
}

#[derive(Debug, Clone, Serialize)]
pub struct FtParams {
    pub mode: Mode,
    pub horizon: Horizon,
    pub cap: usize,
    /// Points for the generating-function symmetry; a 5-point grid per
    /// axis when `None`.
    pub lambda_grid: Option<Vec<Vec<f64>>>,
    pub replicas: usize,
    pub seed: u64,
    #[serde(skip)]
    pub workers: usize,
}

impl Default for FtParams {
    fn default() -> Self {
        Self {
            mode: Mode::Exact,
            horizon: Horizon::Time(2.0),
            cap: 20,
            lambda_grid: None,
            replicas: 100_000,
            seed: 0,
            workers: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FtReport {
    pub chain_kind: ChainKind,
    pub mode: Mode,
    pub start: String,
    pub horizon: Horizon,
    pub cap: usize,
    pub cycles: Vec<WatchedCycle>,
    pub skipped: Vec<SkippedCycle>,
    #[serde(serialize_with = "ser_opt_f64")]
    pub eps_trunc: Option<f64>,
    pub transient: Option<TransientSection>,
    pub integral: IntegralSection,
    pub klsp: Option<SymmetrySection>,
    pub notes: Vec<String>,
    pub pass: bool,
}

impl FtReport {
    pub fn cells(&self) -> Vec<CellRow> {
        let mut rows = Vec::new();
        if let Some(t) = &self.transient {
            for c in &t.cells {
                rows.push(CellRow {
                    section: "transient".into(),
                    key: format!("k={} n={:?}", c.k, c.net),
                    observed: c.log_ratio,
                    target: c.target,
                    residual: c.residual,
                    bound: c.bound,
                });
            }
        }
        rows.push(CellRow {
            section: "integral".into(),
            key: self.mode.as_str().into(),
            observed: self.integral.estimate,
            target: 1.0,
            residual: self.integral.estimate - 1.0,
            bound: self
                .integral
                .bound
                .or(self.integral.ci.map(|[lo, hi]| (hi - lo) / 2.0))
                .unwrap_or(f64::NAN),
        });
        if let Some(s) = &self.klsp {
            for r in &s.rows {
                rows.push(CellRow {
                    section: "klsp".into(),
                    key: format!("{:?}", r.lambda),
                    observed: r.value,
                    target: r.mirrored_value,
                    residual: r.residual,
                    bound: r.bound,
                });
            }
        }
        rows
    }
}

/// Default symmetric lambda grid.
pub fn default_lambda_grid(dim: usize) -> ProductGrid {
    ProductGrid::uniform(vec![-1.0, -0.5, 0.0, 0.5, 1.0], dim).expect("nonempty")
}

/// Transient, integral and generating-function checks on net counts.
pub fn ft_check(
    chain: &ChainSpec,
    family: &[Cycle],
    start: usize,
    params: &FtParams,
) -> Result<FtReport> {
    if start >= chain.size() {
        return Err(Error::StateOutOfRange {
            index: start,
            size: chain.size(),
        });
    }
    let states = chain.states();
    let (cycles, rho, skipped) = usable_cycles(chain, family)?;
    let watched = cycles
        .iter()
        .zip(&rho)
        .map(|(c, &r)| WatchedCycle {
            cycle: c.format(states),
            reverse: c.reversed().format(states),
            rho: r,
        })
        .collect();
    let mut notes = Vec::new();
    let (eps, transient, integral, klsp) = match params.mode {
        Mode::Exact => {
            let law = net_law(chain, &cycles, &rho, start, params.horizon, params.cap)?;
            let grid = match &params.lambda_grid {
                Some(axes) => ProductGrid::new(axes.clone())?,
                None => default_lambda_grid(cycles.len()),
            };
            let t = transient_ft(&law, states);
            let i = integral_ft_exact(&law);
            let k = klsp_check(&law, &grid)?;
            (Some(law.eps_trunc), Some(t), i, Some(k))
        }
        Mode::Mc => {
            notes.push("transient and generating-function checks run in exact mode only".into());
            let i = integral_ft_mc(
                chain,
                &cycles,
                &rho,
                start,
                params.horizon,
                params.replicas,
                params.seed,
                params.workers,
            )?;
            (None, None, i, None)
        }
    };
    let pass = transient.as_ref().is_none_or(|t| t.pass)
        && integral.pass
        && klsp.as_ref().is_none_or(|k| k.pass);
    Ok(FtReport {
        chain_kind: chain.kind(),
        mode: params.mode,
        start: states.label(start).to_string(),
        horizon: params.horizon,
        cap: params.cap,
        cycles: watched,
        skipped,
        eps_trunc: eps,
        transient,
        integral,
        klsp,
        notes,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::validate_chain;

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

    fn ring(forward: f64, backward: f64) -> ChainSpec {
        let mut q = vec![vec![0.0; 3]; 3];
        for i in 0..3 {
            q[i][(i + 1) % 3] = forward;
            q[i][(i + 2) % 3] = backward;
            q[i][i] = -(forward + backward);
        }
        validate_chain(&q, ChainKind::Ctmc).unwrap()
    }

    fn c(s: &[usize]) -> Cycle {
        Cycle::new(s).unwrap()
    }

    #[test]
    fn exact_checks_on_irreversible_chain() {
        let chain = mm_single();
        let rep = ft_check(&chain, &[c(&[0, 1, 2])], 0, &FtParams::default()).unwrap();
        assert!(rep.pass, "{:#?}", rep.transient);
        assert!((rep.cycles[0].rho - 24f64.ln()).abs() < 1e-14);
        let slope = &rep.transient.as_ref().unwrap().slopes[0];
        assert!((slope.slope.unwrap() - 24f64.ln()).abs() < 1e-8);
        assert!((rep.integral.estimate - 1.0).abs() <= rep.integral.bound.unwrap());
        assert_eq!(rep.klsp.as_ref().unwrap().rows.len(), 5);
    }

    #[test]
    fn reversible_chain_ratios_are_one() {
        let chain = ring(1.0, 1.0);
        let law = net_law(&chain, &[c(&[0, 1, 2])], &[0.0], 0, Horizon::Time(2.0), 15).unwrap();
        let t = transient_ft(&law, chain.states());
        assert!(t.pass);
        assert!(t.cells.iter().all(|c| c.log_ratio.abs() < 1e-12));
        let i = integral_ft_exact(&law);
        assert!(i.pass);
        let m = law.marginal(0);
        for n in 0..m.len() {
            assert!((m[n] - m[m.len() - 1 - n]).abs() < 1e-15);
        }
    }

    #[test]
    fn fixed_point_of_the_mirror_map() {
        let chain = mm_single();
        let rho = 24f64.ln();
        let law = net_law(&chain, &[c(&[0, 1, 2])], &[rho], 0, Horizon::Time(1.0), 15).unwrap();
        let g = ProductGrid::new(vec![vec![-rho / 2.0]]).unwrap();
        let s = klsp_check(&law, &g).unwrap();
        assert_eq!(s.rows[0].mirrored, s.rows[0].lambda);
        assert_eq!(s.max_residual, 0.0);
    }

    #[test]
    fn skipped_and_rejected_cycles() {
        let q = vec![
            vec![-1.0, 1.0, 0.0],
            vec![0.0, -1.0, 1.0],
            vec![1.0, 0.0, -1.0],
        ];
        let chain = validate_chain(&q, ChainKind::Ctmc).unwrap();
        let err = ft_check(&chain, &[c(&[0, 1, 2])], 0, &FtParams::default()).unwrap_err();
        assert!(matches!(err, Error::InfiniteAffinity(_)));
        let chain = mm_single();
        let err = usable_cycles(&chain, &[c(&[0, 1, 2]), c(&[0, 2, 1])]).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
        let (kept, _, skipped) = usable_cycles(&chain, &[c(&[0, 1]), c(&[0, 2, 1])]).unwrap();
        assert_eq!(kept.len(), 1);
        assert_eq!(skipped.len(), 1);
    }

    #[test]
    fn generating_symmetry_for_conjugate_pair() {
        let chain = mm_single();
        let dist = exact_count_dist(
            &chain,
            &[c(&[0, 1, 2]), c(&[0, 2, 1])],
            0,
            Horizon::Time(2.0),
            &[15, 15],
        )
        .unwrap();
        let s = generating_symmetry_check(&chain, &dist, (0, 1), &default_lambda_grid(2)).unwrap();
        assert!(s.pass, "{}", s.max_residual);
        assert_eq!(s.rows.len(), 25);
    }

    #[test]
    fn monte_carlo_integral() {
        let chain = ring(1.0, 0.5);
        let params = FtParams {
            mode: Mode::Mc,
            horizon: Horizon::Time(1.0),
            replicas: 20_000,
            seed: 3,
            ..FtParams::default()
        };
        let rep = ft_check(&chain, &[c(&[0, 1, 2])], 0, &params).unwrap();
        assert!(rep.pass, "{:?}", rep.integral);
        assert!(rep.transient.is_none());
    }
}
