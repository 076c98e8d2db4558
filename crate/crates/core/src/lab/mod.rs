//! Executable checks of the cycle fluctuation identities.

pub mod entropy;
pub mod ft;
pub mod haldane;
pub mod ldp;
pub mod legendre;
pub mod report;
pub mod stats;

pub use entropy::{
    entropy_decomposition, entropy_experiment, entropy_production_rate, EntropyDecomposition,
    EntropyReport,
};
pub use ft::{ft_check, net_law, FtParams, FtReport, NetLaw};
pub use haldane::{
    check_family, haldane_test, independence_test, FamilyMode, HaldaneParams, HaldaneReport, Mode,
};
pub use ldp::{
    rate_function, rate_symmetry_check, scgf_estimate, scgf_from_values, write_rate_csv,
    Observable, RateFunctionEstimate, RateSymmetryParams, RateSymmetryReport, ScgfEstimate,
    Symmetry,
};
pub use legendre::{
    convexity_certificate, grid_error_bound, legendre_fenchel, legendre_fenchel_argmax,
    linspace_step, ConvexityCertificate, ProductGrid,
};
pub use report::{inputs_digest, write_cells_csv, CellRow, Report, LIBRARY_VERSION};
