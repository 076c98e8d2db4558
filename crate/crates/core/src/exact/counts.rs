//! Exact joint law of cycle counts on a capped lattice.
//!
//! Counts are tracked on the derived chain. A DTMC is stepped directly; a
//! CTMC is uniformized and its law is the Poisson mixture of the stepped
//! laws. Mass that would push a count past its cap is dropped and reported
//! in `eps_trunc` together with the Poisson tail.

use std::io::{BufRead, Write};

use serde::Serialize;

use super::augmented::AugmentedChain;
use super::forming::{check_family_start, POISSON_TOL};
use crate::chain::{ChainSpec, CtmcSpec};
use crate::cycle::Cycle;
use crate::error::{Error, Result};
use crate::numeric::{poisson_weights, KahanSum};
use crate::simulator::Horizon;

/// Largest exponent accepted in `exp(lambda . n)`.
const MAX_EXPONENT: f64 = 700.0;

#[derive(Debug, Clone, Serialize)]
pub struct CountDistribution {
    pub cycles: Vec<Cycle>,
    pub caps: Vec<usize>,
    pub start: usize,
    pub horizon: Horizon,
    /// Mixed-radix strides of the lattice, first cycle fastest.
    strides: Vec<usize>,
    cells: usize,
    nodes: usize,
    /// Mass per `(derived node, lattice cell)`, node-major.
    #[serde(skip)]
    mass: Vec<f64>,
    /// Mass that exceeded a cap.
    pub cap_overflow: f64,
    /// Bound on the discarded Poisson tail (zero for a DTMC).
    pub poisson_tail: f64,
    pub eps_trunc: f64,
}

impl CountDistribution {
    pub fn cell_count(&self) -> usize {
        self.cells
    }

    pub fn node_count(&self) -> usize {
        self.nodes
    }

    pub fn decode(&self, cell: usize) -> Vec<usize> {
        self.strides
            .iter()
            .zip(&self.caps)
            .map(|(&s, &c)| (cell / s) % (c + 1))
            .collect()
    }

    pub fn encode(&self, counts: &[usize]) -> Option<usize> {
        if counts.len() != self.caps.len() {
            return None;
        }
        let mut cell = 0;
        for ((&n, &c), &s) in counts.iter().zip(&self.caps).zip(&self.strides) {
            if n > c {
                return None;
            }
            cell += n * s;
        }
        Some(cell)
    }

    /// Mass per lattice cell, summed over derived nodes.
    pub fn lattice(&self) -> Vec<f64> {
        (0..self.cells)
            .map(|cell| {
                (0..self.nodes)
                    .map(|node| self.mass[node * self.cells + cell])
                    .collect::<KahanSum>()
                    .value()
            })
            .collect()
    }

    pub fn node_mass(&self, node: usize, cell: usize) -> f64 {
        self.mass[node * self.cells + cell]
    }

    /// `P(N^{c_1} = n_1, ...)`; zero outside the lattice.
    pub fn prob(&self, counts: &[usize]) -> f64 {
        match self.encode(counts) {
            Some(cell) => (0..self.nodes)
                .map(|node| self.mass[node * self.cells + cell])
                .collect::<KahanSum>()
                .value(),
            None => 0.0,
        }
    }

    pub fn total_mass(&self) -> f64 {
        KahanSum::from_iter(self.mass.iter().copied()).value()
    }
}

fn validate_caps(cycles: &[Cycle], caps: &[usize]) -> Result<()> {
    if caps.len() != cycles.len() {
        return Err(Error::InvalidArgument(format!(
            "{} caps for {} cycles",
            caps.len(),
            cycles.len()
        )));
    }
    if caps.contains(&0) {
        return Err(Error::InvalidArgument("caps must be at least 1".into()));
    }
    caps.iter()
        .try_fold(1usize, |acc, &c| acc.checked_mul(c + 1))
        .filter(|&n| n <= 50_000_000)
        .map(|_| ())
        .ok_or_else(|| Error::InvalidArgument("count lattice too large".into()))
}

/// One step of the count DP. Returns the mass dropped at the caps.
fn step(
    aug: &AugmentedChain,
    watch: &[Vec<Option<usize>>],
    strides: &[usize],
    caps: &[usize],
    cells: usize,
    cur: &[f64],
    next: &mut [f64],
) -> f64 {
    next.iter_mut().for_each(|x| *x = 0.0);
    let mut overflow = KahanSum::new();
    for node in 0..aug.len() {
        let row = &cur[node * cells..(node + 1) * cells];
        for (cell, &m) in row.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            for (e, w) in aug.edges(node).iter().zip(&watch[node]) {
                let v = m * e.prob;
                match *w {
                    None => next[e.to * cells + cell] += v,
                    Some(k) => {
                        if (cell / strides[k]) % (caps[k] + 1) == caps[k] {
                            overflow.add(v);
                        } else {
                            next[e.to * cells + cell + strides[k]] += v;
                        }
                    }
                }
            }
        }
    }
    overflow.value()
}

/// Joint law of `(N^{c_1}, ..., N^{c_r})` at the horizon, starting from
/// `start`, which must lie on every cycle.
pub fn exact_count_dist(
    chain: &ChainSpec,
    cycles: &[Cycle],
    start: usize,
    horizon: Horizon,
    caps: &[usize],
) -> Result<CountDistribution> {
    for c in cycles {
        if let Some(&s) = c.states().iter().find(|&&s| s >= chain.size()) {
            return Err(Error::StateOutOfRange {
                index: s,
                size: chain.size(),
            });
        }
    }
    check_family_start(cycles, start, true)?;
    validate_caps(cycles, caps)?;
    let mut strides = Vec::with_capacity(caps.len());
    let mut cells = 1;
    for &c in caps {
        strides.push(cells);
        cells *= c + 1;
    }
    let aug = AugmentedChain::for_chain(chain, start)?;
    let watch = aug.watch_index(cycles);
    let nodes = aug.len();
    let mut cur = vec![0.0; nodes * cells];
    cur[0] = 1.0;
    let mut next = vec![0.0; nodes * cells];

    let (mass, cap_overflow, poisson_tail) = match (chain, horizon) {
        (ChainSpec::Dtmc(_), Horizon::Steps(n)) => {
            let mut overflow = KahanSum::new();
            for _ in 0..n {
                overflow.add(step(&aug, &watch, &strides, caps, cells, &cur, &mut next));
                std::mem::swap(&mut cur, &mut next);
            }
            (cur, overflow.value(), 0.0)
        }
        (ChainSpec::Ctmc(_), Horizon::Time(t)) => {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(Error::InvalidArgument(format!("bad time horizon {t}")));
            }
            let rate = aug.rate().expect("uniformized");
            let w = poisson_weights(rate * t, POISSON_TOL);
            let mut sum = vec![0.0; nodes * cells];
            let mut comp = vec![0.0; nodes * cells];
            let mut dropped = 0.0;
            let mut overflow = KahanSum::new();
            for (m, &wm) in w.weights.iter().enumerate() {
                if m > 0 {
                    dropped += step(&aug, &watch, &strides, caps, cells, &cur, &mut next);
                    std::mem::swap(&mut cur, &mut next);
                }
                overflow.add(wm * dropped);
                for ((s, c), &x) in sum.iter_mut().zip(comp.iter_mut()).zip(&cur) {
                    if x == 0.0 {
                        continue;
                    }
                    // Kahan accumulation of the Poisson mixture
                    let y = wm * x - *c;
                    let t = *s + y;
                    *c = (t - *s) - y;
                    *s = t;
                }
            }
            (sum, overflow.value(), w.tail_bound)
        }
        _ => {
            return Err(Error::InvalidArgument(
                "horizon kind does not match chain kind".into(),
            ))
        }
    };
    Ok(CountDistribution {
        cycles: cycles.to_vec(),
        caps: caps.to_vec(),
        start,
        horizon,
        strides,
        cells,
        nodes,
        mass,
        cap_overflow,
        poisson_tail,
        eps_trunc: cap_overflow + poisson_tail,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeneratingValue {
    pub value: f64,
    /// Truncated mass weighted by the largest factor just past the caps.
    pub error_bound: f64,
}

/// `E exp(lambda . N)` summed over the lattice.
pub fn exact_generating(dist: &CountDistribution, lambda: &[f64]) -> Result<GeneratingValue> {
    if lambda.len() != dist.caps.len() {
        return Err(Error::InvalidArgument(format!(
            "{} lambdas for {} cycles",
            lambda.len(),
            dist.caps.len()
        )));
    }
    if lambda.iter().any(|l| !l.is_finite()) {
        return Err(Error::InvalidArgument("lambda must be finite".into()));
    }
    let reach: f64 = lambda
        .iter()
        .zip(&dist.caps)
        .map(|(&l, &c)| l.abs() * (c + 1) as f64)
        .sum();
    if reach > MAX_EXPONENT {
        return Err(Error::Overflow);
    }
    let lattice = dist.lattice();
    let mut acc = KahanSum::new();
    for (cell, &p) in lattice.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let n = dist.decode(cell);
        let e: f64 = lambda.iter().zip(&n).map(|(&l, &k)| l * k as f64).sum();
        acc.add(p * e.exp());
    }
    let past_caps: f64 = lambda
        .iter()
        .zip(&dist.caps)
        .map(|(&l, &c)| l.max(0.0) * (c + 1) as f64)
        .sum();
    Ok(GeneratingValue {
        value: acc.value(),
        error_bound: dist.eps_trunc * past_caps.exp(),
    })
}

/// `p_t = p_0 exp(tQ)` by uniformization.
pub fn transient_distribution(chain: &CtmcSpec, p0: &[f64], t: f64) -> Result<Vec<f64>> {
    let n = chain.size();
    if p0.len() != n {
        return Err(Error::InvalidArgument(format!(
            "initial distribution has {} entries for {n} states",
            p0.len()
        )));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!("bad time {t}")));
    }
    let rate = super::augmented::UNIFORMIZATION_FACTOR * chain.max_exit_rate();
    let u = chain.uniformized(rate)?;
    let w = poisson_weights(rate * t, 1e-15);
    let mut v = p0.to_vec();
    let mut acc: Vec<KahanSum> = vec![KahanSum::new(); n];
    for (m, &wm) in w.weights.iter().enumerate() {
        if m > 0 {
            let mut next = vec![0.0; n];
            for i in 0..n {
                for j in 0..n {
                    next[j] += v[i] * u[i * n + j];
                }
            }
            v = next;
        }
        for (a, &x) in acc.iter_mut().zip(&v) {
            a.add(wm * x);
        }
    }
    Ok(acc.iter().map(KahanSum::value).collect())
}

/// Oracle dump read back from CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleDump {
    pub horizon: f64,
    pub caps: Vec<usize>,
    pub eps_trunc: f64,
    pub cells: Vec<(Vec<usize>, f64)>,
}

/// Writes a `# horizon=..,caps=..,eps_trunc=..` line, then
/// `n_1,..,n_r,probability` rows for every lattice cell.
pub fn write_oracle_csv<W: Write>(out: W, dist: &CountDistribution) -> Result<()> {
    let io = |e: std::io::Error| Error::InvalidArgument(format!("oracle output failed: {e}"));
    let mut out = out;
    let caps: Vec<String> = dist.caps.iter().map(usize::to_string).collect();
    writeln!(
        out,
        "# horizon={} caps={} eps_trunc={:e}",
        dist.horizon.value(),
        caps.join(";"),
        dist.eps_trunc
    )
    .map_err(io)?;
    let mut w = csv::Writer::from_writer(out);
    let cerr = |e: csv::Error| Error::InvalidArgument(format!("oracle output failed: {e}"));
    let mut header: Vec<String> = (1..=dist.caps.len()).map(|k| format!("n_{k}")).collect();
    header.push("probability".into());
    w.write_record(&header).map_err(cerr)?;
    for (cell, p) in dist.lattice().into_iter().enumerate() {
        let mut row: Vec<String> = dist.decode(cell).iter().map(usize::to_string).collect();
        row.push(format!("{p:e}"));
        w.write_record(&row).map_err(cerr)?;
    }
    w.flush().map_err(io)?;
    Ok(())
}

pub fn read_oracle_csv<R: BufRead>(mut input: R) -> Result<OracleDump> {
    let bad = |m: &str| Error::InvalidArgument(format!("malformed oracle dump: {m}"));
    let mut first = String::new();
    input
        .read_line(&mut first)
        .map_err(|e| bad(&e.to_string()))?;
    let meta = first
        .trim()
        .strip_prefix('#')
        .ok_or_else(|| bad("missing header comment"))?;
    let (mut horizon, mut caps, mut eps) = (None, None, None);
    for field in meta.split_whitespace() {
        let (k, v) = field.split_once('=').ok_or_else(|| bad(field))?;
        match k {
            "horizon" => horizon = v.parse::<f64>().ok(),
            "caps" => {
                caps = v
                    .split(';')
                    .map(|c| c.parse::<usize>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .ok()
            }
            "eps_trunc" => eps = v.parse::<f64>().ok(),
            _ => return Err(bad(k)),
        }
    }
    let (horizon, caps, eps_trunc) = match (horizon, caps, eps) {
        (Some(h), Some(c), Some(e)) => (h, c, e),
        _ => return Err(bad("incomplete header")),
    };
    let mut reader = csv::Reader::from_reader(input);
    let mut cells = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| bad(&e.to_string()))?;
        if rec.len() != caps.len() + 1 {
            return Err(bad("wrong column count"));
        }
        let counts = rec
            .iter()
            .take(caps.len())
            .map(|x| x.parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| bad(&e.to_string()))?;
        let p = rec[caps.len()]
            .parse::<f64>()
            .map_err(|e| bad(&e.to_string()))?;
        cells.push((counts, p));
    }
    Ok(OracleDump {
        horizon,
        caps,
        eps_trunc,
        cells,
    })
}
