//! Trajectory entropy production split into completed cycles and the rest.

use std::io::Write;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::Serialize;

use super::stats::mean_se;
use crate::chain::{ChainKind, ChainSpec, CtmcSpec};
use crate::cycle::{Cycle, DerivedState};
use crate::error::{Error, Result};
use crate::exact::transient_distribution;
use crate::simulator::{par_replicas, replica_rng, simulate_with, Horizon, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EntropyDecomposition {
    pub t: f64,
    /// `W_t`, the log path-probability ratio per unit time.
    pub w: f64,
    /// `(1/t) sum over popped cycles of their affinities`.
    pub cycle_part: f64,
    /// `W_t - cycle_part`.
    pub remainder: f64,
    /// `(1/t) log(p_0(X_0) / p_t(X_t))`.
    pub boundary: f64,
    /// Edge terms still on the derived-chain stack at `t`, per unit time.
    pub stack: f64,
}

fn edge_term(chain: &CtmcSpec, a: usize, b: usize) -> Result<f64> {
    let (f, r) = (chain.q(a, b), chain.q(b, a));
    if !(f > 0.0 && r > 0.0) {
        return Err(Error::InfiniteEntropyProduction { from: a, to: b });
    }
    Ok(f.ln() - r.ln())
}

/// Affinity of a cycle computed edge by edge.
fn cycle_log_ratio(chain: &CtmcSpec, c: &Cycle) -> Result<f64> {
    c.edges().map(|(a, b)| edge_term(chain, a, b)).sum()
}

fn decompose(
    traj: &Trajectory,
    chain: &CtmcSpec,
    p0: &[f64],
    pt: &[f64],
    t: f64,
) -> Result<EntropyDecomposition> {
    let start = traj.states[0];
    let mut y = DerivedState::new(start)?;
    let mut edges = 0.0;
    let mut cycles = 0.0;
    let mut last = start;
    for k in 1..traj.states.len() {
        if traj.jump_times[k] > t {
            break;
        }
        let (a, b) = (traj.states[k - 1], traj.states[k]);
        edges += edge_term(chain, a, b)?;
        if let Some(c) = y.push(b)? {
            cycles += cycle_log_ratio(chain, &c)?;
        }
        last = b;
    }
    let (a, b) = (p0[start], pt[last]);
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "path endpoint has zero probability (p0 = {a}, pt = {b})"
        )));
    }
    let boundary = (a.ln() - b.ln()) / t;
    let w = boundary + edges / t;
    let cycle_part = cycles / t;
    Ok(EntropyDecomposition {
        t,
        w,
        cycle_part,
        remainder: w - cycle_part,
        boundary,
        stack: (edges - cycles) / t,
    })
}

fn check_inputs(traj: &Trajectory, chain: &CtmcSpec, p0: &[f64], t: f64) -> Result<()> {
    if traj.kind != ChainKind::Ctmc {
        return Err(Error::InvalidArgument(
            "entropy decomposition needs a CTMC trajectory".into(),
        ));
    }
    if p0.len() != chain.size() {
        return Err(Error::InvalidArgument(format!(
            "initial distribution has {} entries for {} states",
            p0.len(),
            chain.size()
        )));
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!("bad time {t}")));
    }
    let recorded = traj.horizon.value();
    if t > recorded {
        return Err(Error::HorizonExceeded {
            requested: t,
            recorded,
        });
    }
    Ok(())
}

/// `(W_t, cycle_part, W^r_t)` along one trajectory started from `p0`.
pub fn entropy_decomposition(
    traj: &Trajectory,
    chain: &CtmcSpec,
    p0: &[f64],
    t: f64,
) -> Result<EntropyDecomposition> {
    check_inputs(traj, chain, p0, t)?;
    let pt = transient_distribution(chain, p0, t)?;
    decompose(traj, chain, p0, &pt, t)
}

/// Stationary entropy production rate
/// `(1/2) sum_{a != b} (pi_a q_ab - pi_b q_ba) log(q_ab / q_ba)`.
pub fn entropy_production_rate(chain: &CtmcSpec) -> Result<f64> {
    let pi = chain.stationary()?;
    let n = chain.size();
    let mut total = 0.0;
    for a in 0..n {
        for b in 0..n {
            if a == b || (chain.q(a, b) == 0.0 && chain.q(b, a) == 0.0) {
                continue;
            }
            let flux = pi[a] * chain.q(a, b) - pi[b] * chain.q(b, a);
            total += 0.5 * flux * edge_term(chain, a, b)?;
        }
    }
    Ok(total)
}

/// Largest `|log(q_ab / q_ba)|` over edges.
pub fn max_edge_log_ratio(chain: &CtmcSpec) -> Result<f64> {
    let n = chain.size();
    let mut m: f64 = 0.0;
    for a in 0..n {
        for b in 0..n {
            if a != b && chain.q(a, b) > 0.0 {
                m = m.max(edge_term(chain, a, b)?.abs());
            }
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, Serialize)]
pub struct EntropyRow {
    pub t: f64,
    pub mean_w: f64,
    pub se_w: f64,
    pub mean_cycle_part: f64,
    pub se_cycle_part: f64,
    pub mean_remainder: f64,
    /// `max over replicas of t |W^r_t|`.
    pub max_scaled_remainder: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EntropyReport {
    pub times: Vec<f64>,
    pub replicas: usize,
    pub seed: u64,
    /// Exact stationary entropy production rate; equals half the sum of
    /// circulation times affinity over all cycles.
    pub entropy_production_rate: f64,
    pub rows: Vec<EntropyRow>,
    /// Smallest `C` with `|W^r_t| <= C / t` for every sample.
    pub c_fit: f64,
    /// `S * max |log(q_ab / q_ba)|`.
    pub c_bound: f64,
    pub remainder_pass: bool,
    /// `|mean W - e_p| <= 4 se` at the last time.
    pub w_pass: bool,
    /// `|mean cycle_part - e_p| <= 4 se + c_bound / t` at the last time.
    pub cycle_pass: bool,
    pub pass: bool,
}

pub struct EntropyRun {
    pub report: EntropyReport,
    /// `series[replica][time index]`.
    pub series: Vec<Vec<EntropyDecomposition>>,
}

/// Replicas started from `X_0 ~ p0`, decomposed at each of `times`.
pub fn entropy_experiment(
    chain: &CtmcSpec,
    p0: &[f64],
    times: &[f64],
    replicas: usize,
    seed: u64,
    workers: usize,
) -> Result<EntropyRun> {
    if times.is_empty() {
        return Err(Error::EmptyGrid);
    }
    if replicas < 2 {
        return Err(Error::InvalidArgument("need at least 2 replicas".into()));
    }
    let t_max = times.iter().copied().fold(0.0, f64::max);
    let spec = ChainSpec::Ctmc(chain.clone());
    let pick = WeightedIndex::new(p0)
        .map_err(|e| Error::InvalidArgument(format!("bad initial distribution: {e}")))?;
    let pts = times
        .iter()
        .map(|&t| transient_distribution(chain, p0, t))
        .collect::<Result<Vec<_>>>()?;
    if let Some(&t) = times.iter().find(|&&t| !(t > 0.0 && t.is_finite())) {
        return Err(Error::InvalidArgument(format!("bad time {t}")));
    }
    let series = par_replicas(replicas, workers, |r| {
        let mut rng = replica_rng(seed, r as u64);
        let x0 = pick.sample(&mut rng);
        let traj = simulate_with(&spec, x0, Horizon::Time(t_max), &mut rng)?;
        times
            .iter()
            .zip(&pts)
            .map(|(&t, pt)| decompose(&traj, chain, p0, pt, t))
            .collect::<Result<Vec<_>>>()
    })?
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let e_p = entropy_production_rate(chain)?;
    let c_bound = chain.size() as f64 * max_edge_log_ratio(chain)?;
    let rows: Vec<EntropyRow> = times
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let w: Vec<f64> = series.iter().map(|s| s[i].w).collect();
            let c: Vec<f64> = series.iter().map(|s| s[i].cycle_part).collect();
            let rem: Vec<f64> = series.iter().map(|s| s[i].remainder).collect();
            let (mean_w, se_w) = mean_se(&w);
            let (mean_cycle_part, se_cycle_part) = mean_se(&c);
            EntropyRow {
                t,
                mean_w,
                se_w,
                mean_cycle_part,
                se_cycle_part,
                mean_remainder: rem.iter().sum::<f64>() / rem.len() as f64,
                max_scaled_remainder: rem.iter().map(|x| (x * t).abs()).fold(0.0, f64::max),
            }
        })
        .collect();
    let c_fit = rows
        .iter()
        .map(|r| r.max_scaled_remainder)
        .fold(0.0, f64::max);
    let last = rows
        .iter()
        .max_by(|a, b| a.t.total_cmp(&b.t))
        .expect("nonempty");
    let remainder_pass = c_fit <= c_bound;
    let w_pass = (last.mean_w - e_p).abs() <= 4.0 * last.se_w;
    let cycle_pass =
        (last.mean_cycle_part - e_p).abs() <= 4.0 * last.se_cycle_part + c_bound / last.t;
    Ok(EntropyRun {
        report: EntropyReport {
            times: times.to_vec(),
            replicas,
            seed,
            entropy_production_rate: e_p,
            c_fit,
            c_bound,
            remainder_pass,
            w_pass,
            cycle_pass,
            pass: remainder_pass && w_pass && cycle_pass,
            rows,
        },
        series,
    })
}

/// Per-replica series as CSV: `replica,t,w,cycle_part,remainder`.
pub fn write_entropy_csv<W: Write>(out: W, series: &[Vec<EntropyDecomposition>]) -> Result<()> {
    let io = |e: csv::Error| Error::InvalidArgument(e.to_string());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["replica", "t", "w", "cycle_part", "remainder"])
        .map_err(io)?;
    for (r, s) in series.iter().enumerate() {
        for d in s {
            w.write_record([
                r.to_string(),
                d.t.to_string(),
                format!("{:e}", d.w),
                format!("{:e}", d.cycle_part),
                format!("{:e}", d.remainder),
            ])
            .map_err(io)?;
        }
    }
    w.flush().map_err(|e| Error::InvalidArgument(e.to_string()))
}
