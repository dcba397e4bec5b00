//! Overdamped Langevin diffusions on flat tori: simulation, grid rate functions and
//! grid generators.

pub mod fields;
pub mod fv;
pub mod grid;
pub mod io;
pub mod ldp;
pub mod sampler;

pub use fields::{
    rotation, solenoidal_drift, IrreversibleDrift, Mat2, MobilitySpec, Point, PotentialSpec, TorusDomain,
};
pub use fv::{
    grid_gibbs_measure, langevin_generator, observable_rate_grid, observable_rate_langevin,
    scharfetter_gummel_generator,
};
pub use grid::{DensityField, DiffusionCoefficients, PeriodicGrid, TrigMode};
pub use io::{read_field, read_path, write_field, write_path, FieldHeader, PathHeader};
pub use ldp::{
    compare_rates, correction_combined, correction_irreversible, correction_reversible, gartner_rate,
    reversible_rate_explicit, solve_phi, ComparisonReport, PhiSolution, RateReport,
};
pub use sampler::{drift_at, ergodic_average_path, euler_maruyama, replicated_variance_sde, sample_gibbs, Path};
