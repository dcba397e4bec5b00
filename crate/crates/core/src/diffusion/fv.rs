//! Finite-volume Markov generators on periodic grids and the tilted-eigenvalue
//! rate of ergodic averages built on them.

use nalgebra::DMatrix;

use super::fields::{IrreversibleDrift, MobilitySpec, Point, PotentialSpec};
use super::grid::{DiffusionCoefficients, PeriodicGrid};
use crate::chain::{observable_rate, GeneratorMatrix, Observable, ObservableRate, Perturbation, ProbabilityMeasure};
use crate::error::{Error, Result};
use crate::linalg;

/// `B(x) = x / (e^x - 1)` with its removable singularity filled in.
fn bernoulli(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - 0.5 * x
    } else {
        x / x.exp_m1()
    }
}

/// Scharfetter-Gummel discretization of `L = (1/2) div a grad + b . grad` for diagonal `a`.
/// Rates are nonnegative for any drift; the scheme is second order where the cell Peclet
/// number is small.
pub fn scharfetter_gummel_generator(grid: &PeriodicGrid, coeffs: &DiffusionCoefficients) -> Result<GeneratorMatrix> {
    grid.check(coeffs.a().len())?;
    if !coeffs.is_diagonal() {
        return Err(Error::InvalidInput("Scharfetter-Gummel generator needs a diagonal diffusion tensor".into()));
    }
    let n = grid.len();
    let (a, b) = (coeffs.a(), coeffs.b());
    let mut rates = DMatrix::zeros(n, n);
    for k in 0..n {
        for d in 0..grid.dim() {
            let j = grid.neighbor(k, d, true);
            let h = grid.spacing(d);
            let diff = 0.25 * (a[k][d][d] + a[j][d][d]);
            let drift = 0.5 * (b[k][d] + b[j][d]);
            let pe = drift * h / diff;
            let base = diff / (h * h);
            rates[(k, j)] += base * bernoulli(-pe);
            rates[(j, k)] += base * bernoulli(pe);
        }
    }
    GeneratorMatrix::from_rates(rates)
}

/// Nodal Gibbs weights `exp(-U/T)` normalized to sum to one.
pub fn grid_gibbs_measure(grid: &PeriodicGrid, pot: &PotentialSpec) -> Result<ProbabilityMeasure> {
    let t = pot.temperature();
    let u = grid.sample(|x| pot.u(x));
    let umin = u.iter().copied().fold(f64::INFINITY, f64::min);
    ProbabilityMeasure::from_weights(&u.iter().map(|v| (-(v - umin) / t).exp()).collect::<Vec<_>>())
}

/// Generator of the Langevin dynamics on the grid that keeps the nodal Gibbs weights
/// exactly invariant. The mobility part is reversible by construction; the drift part is
/// `Gamma / pi` with `Gamma` antisymmetric and built from a discretely divergence-free flux
/// of `pi C`. Returns the generator and the invariant weights.
pub fn langevin_generator(
    grid: &PeriodicGrid,
    pot: &PotentialSpec,
    mob: &MobilitySpec,
    irr: Option<&IrreversibleDrift>,
) -> Result<(GeneratorMatrix, ProbabilityMeasure)> {
    if grid.domain() != pot.domain() {
        return Err(Error::InvalidInput("grid and potential live on different tori".into()));
    }
    let n = grid.len();
    let dim = grid.dim();
    let t = pot.temperature();
    let pts = grid.points();
    let u: Vec<f64> = pts.iter().map(|x| pot.u(x)).collect();
    let sig: Vec<_> = pts.iter().map(|x| mob.big_sigma(x)).collect();
    if dim == 2 && sig.iter().any(|s| s[0][1] != 0.0 || s[1][0] != 0.0) {
        return Err(Error::InvalidInput("grid Langevin generator needs a diagonal mobility".into()));
    }
    let pi = grid_gibbs_measure(grid, pot)?;
    let mut rates = DMatrix::zeros(n, n);
    for k in 0..n {
        for d in 0..dim {
            let j = grid.neighbor(k, d, true);
            let h = grid.spacing(d);
            let base = t * 0.5 * (sig[k][d][d] + sig[j][d][d]) / (h * h);
            let du = (u[j] - u[k]) / (2.0 * t);
            rates[(k, j)] += base * (-du).exp();
            rates[(j, k)] += base * du.exp();
        }
    }
    let q = GeneratorMatrix::from_rates(rates)?;
    let Some(irr) = irr else {
        return Ok((q, pi));
    };
    let flux = divergence_free_flux(grid, pi.weights(), &pts.iter().map(|x| irr.c(x)).collect::<Vec<_>>())?;
    let w = pi.weights();
    let mut a = DMatrix::zeros(n, n);
    for k in 0..n {
        for d in 0..dim {
            let j = grid.neighbor(k, d, true);
            let gamma = flux[k][d] / (2.0 * grid.spacing(d));
            a[(k, j)] += gamma / w[k];
            a[(j, k)] -= gamma / w[j];
            a[(k, k)] -= gamma / w[k];
            a[(j, j)] += gamma / w[j];
        }
    }
    // the diagonal above collects -sum_j Gamma(k, j) / pi(k), which vanishes for a
    // divergence-free flux; keep it so rows sum to zero exactly in floating point
    let q = q.perturb(&Perturbation::new(a)?)?;
    Ok((q, pi))
}

/// Face fluxes `G` of `pi C` corrected by a discrete gradient so that the discrete divergence
/// `sum_d (G_{k,d} - G_{k-e_d,d}) / h_d` vanishes at every node.
fn divergence_free_flux(grid: &PeriodicGrid, pi: &[f64], c: &[Point]) -> Result<Vec<[f64; 2]>> {
    let n = grid.len();
    let dim = grid.dim();
    let mut g = vec![[0.0; 2]; n];
    for k in 0..n {
        for d in 0..dim {
            let j = grid.neighbor(k, d, true);
            g[k][d] = 0.5 * (pi[k] + pi[j]) * 0.5 * (c[k][d] + c[j][d]);
        }
    }
    let div = |g: &[[f64; 2]]| -> Vec<f64> {
        (0..n)
            .map(|k| {
                (0..dim)
                    .map(|d| (g[k][d] - g[grid.neighbor(k, d, false)][d]) / grid.spacing(d))
                    .sum()
            })
            .collect()
    };
    let neg_laplacian = |x: &[f64], out: &mut [f64]| {
        for (k, o) in out.iter_mut().enumerate() {
            let mut s = 0.0;
            for d in 0..dim {
                let h2 = grid.spacing(d).powi(2);
                s += (2.0 * x[k] - x[grid.neighbor(k, d, true)] - x[grid.neighbor(k, d, false)]) / h2;
            }
            *o = s;
        }
    };
    let scale = g.iter().flat_map(|f| f.iter()).fold(0.0_f64, |m, v| m.max(v.abs()))
        / (0..dim).map(|d| grid.spacing(d)).fold(f64::INFINITY, f64::min);
    for _ in 0..4 {
        let r = div(&g);
        let res = r.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if res <= 1e-13 * scale {
            return Ok(g);
        }
        let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
        let chi = linalg::conjugate_gradient(neg_laplacian, &rhs, 1e-14, 20 * n + 1000)?.x;
        for k in 0..n {
            for d in 0..dim {
                let j = grid.neighbor(k, d, true);
                g[k][d] -= (chi[j] - chi[k]) / grid.spacing(d);
            }
        }
    }
    let res = div(&g).iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if res > 1e-13 * scale {
        return Err(Error::SolveFailure(format!("flux projection left divergence {res:e}")));
    }
    Ok(g)
}

/// Rate of the ergodic average of `f` at level `ell` for the Scharfetter-Gummel generator of `coeffs`.
pub fn observable_rate_grid(
    grid: &PeriodicGrid,
    coeffs: &DiffusionCoefficients,
    f: impl Fn(&Point) -> f64,
    ell: f64,
) -> Result<ObservableRate> {
    let q = scharfetter_gummel_generator(grid, coeffs)?;
    observable_rate(&q, &Observable::new(grid.sample(f))?, ell)
}

/// Rate of the ergodic average of `f` at level `ell` for the Gibbs-preserving Langevin generator.
pub fn observable_rate_langevin(
    grid: &PeriodicGrid,
    pot: &PotentialSpec,
    mob: &MobilitySpec,
    irr: Option<&IrreversibleDrift>,
    f: impl Fn(&Point) -> f64,
    ell: f64,
) -> Result<ObservableRate> {
    let (q, _) = langevin_generator(grid, pot, mob, irr)?;
    observable_rate(&q, &Observable::new(grid.sample(f))?, ell)
}
