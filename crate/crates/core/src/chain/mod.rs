//! Finite-state continuous-time Markov chains.

pub mod diagnostics;
pub mod ensemble;
pub mod generator;
pub mod ldp;
pub mod perturb;

pub use diagnostics::{
    asymptotic_variance, ergodic_average, poisson_solution, replica_rng, replicated_variance, simulate_ctmc,
    spectral_gap, SpectralReport, Trajectory, VarianceEstimate,
};
pub use ensemble::{random_instance, BaseDynamics, ChainInstance, EnsembleSpec};
pub use generator::{
    is_reversible, stationary_measure, weighted_inner, GeneratorMatrix, Observable, Perturbation, ProbabilityMeasure,
};
pub use ldp::{
    dv_lower_bound, dv_rate_chain, observable_rate, rate_gap_identity, tilted_eigenvalue, y_functional,
    ObservableRate, RateCertificate, RateGapIdentity, TiltedReport,
};
pub use perturb::{
    complete_graph, cycle_perturbation, glauber_cycle_perturbation, glauber_generator, max_admissible_epsilon,
    metropolis_cycle_perturbation, metropolis_generator, peskun_perturbation, CyclePerturbation, EnergyFunction,
    PeskunPair,
};
