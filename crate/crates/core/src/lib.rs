//! Reversible and irreversible perturbations of reversible Markov samplers.
//!
//! Two families of samplers are covered:
//!
//! - [`chain`]: finite-state continuous-time chains. Peskun pair and cycle
//!   perturbations of Glauber/Metropolis dynamics, spectral gap, asymptotic
//!   variance, Gillespie simulation and Donsker–Varadhan rate functions.
//! - [`diffusion`]: overdamped Langevin dynamics on flat 1D/2D tori with
//!   state-dependent mobility and divergence-free irreversible drift,
//!   Euler–Maruyama sampling, and grid evaluation of rate functions and
//!   their perturbation corrections.

pub mod chain;
pub mod diffusion;
pub mod error;
pub mod linalg;

pub use error::{Error, Result};
