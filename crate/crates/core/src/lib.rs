pub mod chain;
pub mod cycle;
pub mod error;
pub mod exact;
pub mod lab;
pub mod numeric;
pub mod simulator;

pub use chain::{
    cycle_affinity, cycle_strength, kolmogorov_reversible, validate_chain, Affinity, ChainKind,
    ChainSpec, CtmcSpec, DtmcSpec, Reversibility, StateSpace, ValidateOptions,
};
pub use cycle::{
    canonicalize, derived_step, is_similar, parse_cycle, parse_cycle_list, reversed_cycle,
    run_derived, Cycle, DerivedState, PopResult, MAX_STATES,
};
pub use error::{Error, Result};
pub use simulator::{
    batch_first_forming, batch_sample, circulations, extract_events, replica_rng, simulate_ctmc,
    simulate_dtmc, simulate_with, BatchConfig, CirculationSample, CycleEvent, CycleEventLog,
    FirstEvent, Horizon, ReplicaResult, Trajectory,
};
