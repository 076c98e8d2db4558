//! Exact finite-chain computations used as oracles for the statistical checks.

mod augmented;
mod counts;
mod forming;
mod taboo;

pub use augmented::{AugEdge, AugmentedChain, UNIFORMIZATION_FACTOR};
pub use counts::{
    exact_count_dist, exact_generating, read_oracle_csv, transient_distribution, write_oracle_csv,
    CountDistribution, GeneratingValue, OracleDump,
};
pub use forming::{
    check_family_start, common_states, exact_absorption, exact_forming_cdf, exact_forming_dist,
    pairwise_similar, FormingCdf, FormingDistribution, POISSON_TOL,
};
pub use taboo::{first_entry_residual, g_functional, taboo_prob, TabooTable};
