//! Trajectory sampling, cycle event extraction and replica batches.
//!
//! Replica `k` of a batch draws from ChaCha8 stream `k` of the master seed,
//! so a batch gives the same numbers whatever the worker count.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::Serialize;

use crate::chain::{ChainKind, ChainSpec, CtmcSpec, DtmcSpec, StateSpace};
use crate::cycle::{Cycle, DerivedState};
use crate::error::{Error, Result};

/// RNG for replica `replica` of a run seeded with `seed`.
pub fn replica_rng(seed: u64, replica: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Horizon {
    /// Number of DTMC steps.
    Steps(usize),
    /// CTMC time horizon.
    Time(f64),
}

impl Horizon {
    pub fn value(&self) -> f64 {
        match *self {
            Horizon::Steps(n) => n as f64,
            Horizon::Time(t) => t,
        }
    }

    fn check(&self, kind: ChainKind) -> Result<()> {
        match (kind, *self) {
            (ChainKind::Dtmc, Horizon::Steps(_)) => Ok(()),
            (ChainKind::Ctmc, Horizon::Time(t)) if t > 0.0 && t.is_finite() => Ok(()),
            (ChainKind::Ctmc, Horizon::Time(t)) => Err(Error::InvalidArgument(format!(
                "time horizon must be positive and finite, got {t}"
            ))),
            (ChainKind::Dtmc, Horizon::Time(_)) => {
                Err(Error::InvalidArgument("a DTMC needs a step horizon".into()))
            }
            (ChainKind::Ctmc, Horizon::Steps(_)) => {
                Err(Error::InvalidArgument("a CTMC needs a time horizon".into()))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub kind: ChainKind,
    /// Visited states; for a CTMC this is the embedded chain.
    pub states: Vec<usize>,
    /// CTMC jump times, `jump_times[0] = 0`. Empty for a DTMC.
    pub jump_times: Vec<f64>,
    pub horizon: Horizon,
}

impl Trajectory {
    /// Time of the `k`-th state (the step index for a DTMC).
    pub fn time_of(&self, k: usize) -> f64 {
        match self.kind {
            ChainKind::Dtmc => k as f64,
            ChainKind::Ctmc => self.jump_times[k],
        }
    }
}

/// Cumulative jump kernel of a validated chain, ready for inverse-CDF draws.
#[derive(Debug, Clone)]
pub(crate) struct JumpKernel {
    kind: ChainKind,
    n: usize,
    cum: Vec<f64>,
    last: Vec<usize>,
    exit: Vec<f64>,
}

impl JumpKernel {
    pub(crate) fn new(chain: &ChainSpec) -> Result<Self> {
        let n = chain.size();
        let mut cum = vec![0.0; n * n];
        let mut last = vec![0; n];
        let mut exit = vec![0.0; n];
        for i in 0..n {
            let row: Vec<f64> = (0..n).map(|j| chain.weight(i, j)).collect();
            let total: f64 = row.iter().sum();
            if total <= 0.0 {
                return Err(Error::AbsorbingState(i));
            }
            exit[i] = match chain {
                ChainSpec::Ctmc(c) => c.exit_rate(i),
                ChainSpec::Dtmc(_) => 1.0,
            };
            let mut acc = 0.0;
            for j in 0..n {
                acc += row[j] / total;
                cum[i * n + j] = acc;
                if row[j] > 0.0 {
                    last[i] = j;
                }
            }
        }
        Ok(Self {
            kind: chain.kind(),
            n,
            cum,
            last,
            exit,
        })
    }

    #[inline]
    fn next<R: Rng + ?Sized>(&self, i: usize, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let row = &self.cum[i * self.n..(i + 1) * self.n];
        let last = self.last[i];
        row[..last].iter().position(|&c| u < c).unwrap_or(last)
    }

    #[inline]
    fn hold<R: Rng + ?Sized>(&self, i: usize, rng: &mut R) -> f64 {
        let e: f64 = rng.sample(Exp1);
        e / self.exit[i]
    }

    /// Runs the chain from `start`, calling `visit(step, time, state)` after
    /// every jump. Returning `false` from `visit` stops the walk.
    pub(crate) fn walk<R: Rng + ?Sized>(
        &self,
        start: usize,
        horizon: Horizon,
        rng: &mut R,
        mut visit: impl FnMut(usize, f64, usize) -> bool,
    ) {
        let mut state = start;
        match (self.kind, horizon) {
            (ChainKind::Dtmc, Horizon::Steps(n)) => {
                for step in 1..=n {
                    state = self.next(state, rng);
                    if !visit(step, step as f64, state) {
                        return;
                    }
                }
            }
            (ChainKind::Ctmc, Horizon::Time(t_max)) => {
                let mut time = 0.0;
                let mut step = 0;
                loop {
                    let h = self.hold(state, rng);
                    if time + h > t_max {
                        return;
                    }
                    time += h;
                    step += 1;
                    state = self.next(state, rng);
                    if !visit(step, time, state) {
                        return;
                    }
                }
            }
            _ => unreachable!("horizon checked against chain kind"),
        }
    }
}

fn check_start(chain: &ChainSpec, start: usize) -> Result<()> {
    if start >= chain.size() {
        Err(Error::StateOutOfRange {
            index: start,
            size: chain.size(),
        })
    } else {
        Ok(())
    }
}

/// Samples one trajectory of any chain kind from the given RNG.
pub fn simulate_with<R: Rng + ?Sized>(
    chain: &ChainSpec,
    start: usize,
    horizon: Horizon,
    rng: &mut R,
) -> Result<Trajectory> {
    check_start(chain, start)?;
    horizon.check(chain.kind())?;
    let kernel = JumpKernel::new(chain)?;
    let mut states = vec![start];
    let mut jump_times = Vec::new();
    if chain.kind() == ChainKind::Ctmc {
        jump_times.push(0.0);
    }
    kernel.walk(start, horizon, rng, |_, time, s| {
        states.push(s);
        if chain.kind() == ChainKind::Ctmc {
            jump_times.push(time);
        }
        true
    });
    Ok(Trajectory {
        kind: chain.kind(),
        states,
        jump_times,
        horizon,
    })
}

pub fn simulate_dtmc(
    chain: &DtmcSpec,
    start: usize,
    n_steps: usize,
    seed: u64,
) -> Result<Trajectory> {
    let spec = ChainSpec::Dtmc(chain.clone());
    simulate_with(
        &spec,
        start,
        Horizon::Steps(n_steps),
        &mut replica_rng(seed, 0),
    )
}

pub fn simulate_ctmc(chain: &CtmcSpec, start: usize, t_max: f64, seed: u64) -> Result<Trajectory> {
    let spec = ChainSpec::Ctmc(chain.clone());
    simulate_with(
        &spec,
        start,
        Horizon::Time(t_max),
        &mut replica_rng(seed, 0),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CycleEvent {
    /// Forming time: the step for a DTMC, the jump time for a CTMC.
    pub time: f64,
    /// Index of the completing jump in the embedded chain.
    pub step: usize,
    pub cycle: Cycle,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CycleEventLog {
    pub horizon: f64,
    pub events: Vec<CycleEvent>,
}

/// Runs the derived chain over a trajectory and keeps pops of watched
/// cycles (every pop when `watched` is empty).
pub fn extract_events(traj: &Trajectory, watched: &[Cycle]) -> Result<CycleEventLog> {
    let (&first, rest) = traj
        .states
        .split_first()
        .ok_or_else(|| Error::InvalidArgument("trajectory is empty".into()))?;
    let mut y = DerivedState::new(first)?;
    let mut events = Vec::new();
    for (k, &s) in rest.iter().enumerate() {
        if let Some(c) = y.push(s)? {
            if watched.is_empty() || watched.contains(&c) {
                events.push(CycleEvent {
                    time: traj.time_of(k + 1),
                    step: k + 1,
                    cycle: c,
                });
            }
        }
    }
    Ok(CycleEventLog {
        horizon: traj.horizon.value(),
        events,
    })
}

/// Cycle counts at horizon `t` and the circulations derived from them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CirculationSample {
    pub cycles: Vec<Cycle>,
    pub t: f64,
    /// `N^c_t` per cycle.
    pub counts: Vec<u64>,
    /// `N^{c-}_t` per cycle.
    pub reverse_counts: Vec<u64>,
}

impl CirculationSample {
    /// Empirical circulations `J^c_t = N^c_t / t`.
    pub fn circulation(&self) -> Vec<f64> {
        self.counts.iter().map(|&n| n as f64 / self.t).collect()
    }

    /// Empirical net circulations `K^c_t = (N^c_t - N^{c-}_t) / t`.
    pub fn net(&self) -> Vec<f64> {
        self.counts
            .iter()
            .zip(&self.reverse_counts)
            .map(|(&a, &b)| (a as f64 - b as f64) / self.t)
            .collect()
    }

    /// Net counts `N^c_t - N^{c-}_t`.
    pub fn net_counts(&self) -> Vec<i64> {
        self.counts
            .iter()
            .zip(&self.reverse_counts)
            .map(|(&a, &b)| a as i64 - b as i64)
            .collect()
    }
}

/// Counts events of each cycle and of its reversal up to time `t`. The log
/// must hold the reversed cycles' events too (an unfiltered log does).
pub fn circulations(log: &CycleEventLog, cycles: &[Cycle], t: f64) -> Result<CirculationSample> {
    if t.is_nan() || t <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "horizon must be positive, got {t}"
        )));
    }
    if t > log.horizon {
        return Err(Error::HorizonExceeded {
            requested: t,
            recorded: log.horizon,
        });
    }
    let reversed: Vec<Cycle> = cycles.iter().map(Cycle::reversed).collect();
    let mut counts = vec![0; cycles.len()];
    let mut reverse_counts = vec![0; cycles.len()];
    for e in log.events.iter().filter(|e| e.time <= t) {
        for k in 0..cycles.len() {
            if e.cycle == cycles[k] {
                counts[k] += 1;
            }
            if e.cycle == reversed[k] {
                reverse_counts[k] += 1;
            }
        }
    }
    Ok(CirculationSample {
        cycles: cycles.to_vec(),
        t,
        counts,
        reverse_counts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchConfig {
    pub start: usize,
    pub horizon: Horizon,
    pub replicas: usize,
    pub seed: u64,
    /// Worker threads; 0 lets rayon choose.
    pub workers: usize,
    /// Cycles whose counts (and reversal counts) are tracked.
    pub cycles: Vec<Cycle>,
    /// Keep every event of a tracked cycle or its reversal.
    pub record_events: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FirstEvent {
    pub time: f64,
    pub step: usize,
    /// Index into the tracked cycles.
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicaResult {
    pub sample: CirculationSample,
    /// First pop of any tracked cycle.
    pub first: Option<FirstEvent>,
    /// Number of jumps up to the horizon.
    pub transitions: u64,
    pub events: Option<Vec<CycleEvent>>,
}

/// Runs `f(replica)` for every replica on a pool of `workers` threads and
/// returns results in replica order.
pub fn par_replicas<T, F>(replicas: usize, workers: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot build worker pool: {e}")))?;
    Ok(pool.install(|| (0..replicas).into_par_iter().map(f).collect()))
}

/// Samples `replicas` independent runs and tracks the configured cycles.
pub fn batch_sample(chain: &ChainSpec, config: &BatchConfig) -> Result<Vec<ReplicaResult>> {
    check_start(chain, config.start)?;
    config.horizon.check(chain.kind())?;
    if config.replicas == 0 {
        return Err(Error::InvalidArgument("replicas must be at least 1".into()));
    }
    for c in &config.cycles {
        if let Some(&s) = c.states().iter().find(|&&s| s >= chain.size()) {
            return Err(Error::StateOutOfRange {
                index: s,
                size: chain.size(),
            });
        }
    }
    let kernel = JumpKernel::new(chain)?;
    let reversed: Vec<Cycle> = config.cycles.iter().map(Cycle::reversed).collect();
    let results = par_replicas(config.replicas, config.workers, |r| {
        let mut rng = replica_rng(config.seed, r as u64);
        run_replica(&kernel, config, &reversed, &mut rng)
    })?;
    results.into_iter().collect()
}

fn run_replica(
    kernel: &JumpKernel,
    config: &BatchConfig,
    reversed: &[Cycle],
    rng: &mut ChaCha8Rng,
) -> Result<ReplicaResult> {
    let r = config.cycles.len();
    let mut y = DerivedState::new(config.start)?;
    let mut counts = vec![0u64; r];
    let mut reverse_counts = vec![0u64; r];
    let mut first = None;
    let mut transitions = 0u64;
    let mut events = config.record_events.then(Vec::new);
    let mut failure = None;
    kernel.walk(config.start, config.horizon, rng, |step, time, s| {
        transitions += 1;
        let popped = match y.push(s) {
            Ok(p) => p,
            Err(e) => {
                failure = Some(e);
                return false;
            }
        };
        if let Some(c) = popped {
            let mut tracked = false;
            for k in 0..r {
                if c == config.cycles[k] {
                    counts[k] += 1;
                    tracked = true;
                    if first.is_none() {
                        first = Some(FirstEvent {
                            time,
                            step,
                            index: k,
                        });
                    }
                }
                if c == reversed[k] {
                    reverse_counts[k] += 1;
                    tracked = true;
                }
            }
            if tracked {
                if let Some(ev) = events.as_mut() {
                    ev.push(CycleEvent {
                        time,
                        step,
                        cycle: c,
                    });
                }
            }
        }
        true
    });
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(ReplicaResult {
        sample: CirculationSample {
            cycles: config.cycles.clone(),
            t: config.horizon.value(),
            counts,
            reverse_counts,
        },
        first,
        transitions,
        events,
    })
}

/// Runs each replica until the first pop of any cycle in `family` (or
/// `max_steps` jumps) and reports which cycle formed and when.
pub fn batch_first_forming(
    chain: &ChainSpec,
    start: usize,
    family: &[Cycle],
    replicas: usize,
    seed: u64,
    workers: usize,
    max_steps: usize,
) -> Result<Vec<Option<FirstEvent>>> {
    check_start(chain, start)?;
    if family.is_empty() {
        return Err(Error::InvalidArgument("empty cycle family".into()));
    }
    let kernel = JumpKernel::new(chain)?;
    let horizon = match chain.kind() {
        ChainKind::Dtmc => Horizon::Steps(max_steps),
        ChainKind::Ctmc => Horizon::Time(f64::INFINITY),
    };
    par_replicas(replicas, workers, |r| {
        let mut rng = replica_rng(seed, r as u64);
        let mut y = DerivedState::new(start).expect("start checked");
        let mut first = None;
        kernel.walk(start, horizon, &mut rng, |step, time, s| {
            if let Some(c) = y.push(s).expect("state in range") {
                if let Some(index) = family.iter().position(|f| *f == c) {
                    first = Some(FirstEvent { time, step, index });
                    return false;
                }
            }
            step < max_steps
        });
        first
    })
}

/// Writes events as CSV with columns `replica,time,cycle`.
pub fn write_events_csv<W: Write>(
    out: W,
    states: &StateSpace,
    logs: &[(usize, &[CycleEvent])],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::InvalidArgument(format!("csv output failed: {e}"));
    w.write_record(["replica", "time", "cycle"]).map_err(io)?;
    for (replica, events) in logs {
        for e in events.iter() {
            w.write_record([
                replica.to_string(),
                e.time.to_string(),
                e.cycle.format(states),
            ])
            .map_err(io)?;
        }
    }
    w.flush()
        .map_err(|e| Error::InvalidArgument(format!("csv output failed: {e}")))?;
    Ok(())
}
