//! Donsker-Varadhan rate functions of diffusions on the grid: the general form with
//! its auxiliary potential `phi`, the explicit reversible form and the correction
//! integrals comparing perturbed and unperturbed Langevin dynamics.

use super::fields::{quad_form, sym_eigenvalues, IrreversibleDrift, Mat2, MobilitySpec, Point, PotentialSpec};
use super::grid::{DensityField, DiffusionCoefficients, PeriodicGrid};
use crate::error::{Error, Result};
use crate::linalg;

/// Relative max-norm tolerance on the discrete flux balance.
pub const PHI_TOLERANCE: f64 = 1e-10;

/// Mean-zero solution of `div[p (b + a grad phi)] = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiSolution {
    pub phi: Vec<f64>,
    /// Max-norm of the discrete divergence of the reconstructed flux.
    pub residual: f64,
    /// Flux scale the residual is measured against.
    pub scale: f64,
    pub iterations: usize,
}

fn avg(a: f64, b: f64) -> f64 {
    0.5 * (a + b)
}

fn avg_mat(a: &Mat2, b: &Mat2) -> Mat2 {
    [[avg(a[0][0], b[0][0]), avg(a[0][1], b[0][1])], [avg(a[1][0], b[1][0]), avg(a[1][1], b[1][1])]]
}

/// Staggered-face discretization of `phi -> -div(p a grad phi)` and of `div(p b)`.
struct FluxOperator<'a> {
    grid: &'a PeriodicGrid,
    /// Per face `(k, axis)`: face density, face diffusion tensor.
    pf: Vec<[f64; 2]>,
    af: Vec<[Mat2; 2]>,
    bf: Vec<[f64; 2]>,
}

impl<'a> FluxOperator<'a> {
    fn new(grid: &'a PeriodicGrid, coeffs: &DiffusionCoefficients, dens: &DensityField) -> Self {
        let p = dens.values();
        let (a, b) = (coeffs.a(), coeffs.b());
        let n = grid.len();
        let mut pf = vec![[0.0; 2]; n];
        let mut af = vec![[[[0.0; 2]; 2]; 2]; n];
        let mut bf = vec![[0.0; 2]; n];
        for k in 0..n {
            for d in 0..grid.dim() {
                let j = grid.neighbor(k, d, true);
                pf[k][d] = avg(p[k], p[j]);
                af[k][d] = avg_mat(&a[k], &a[j]);
                bf[k][d] = avg(b[k][d], b[j][d]);
            }
        }
        Self { grid, pf, af, bf }
    }

    /// Face gradient of `phi` on face `(k, d)`: normal part from the two adjacent nodes,
    /// transverse part averaged from centered differences at both nodes.
    fn face_gradient(&self, phi: &[f64], k: usize, d: usize) -> Point {
        let g = self.grid;
        let j = g.neighbor(k, d, true);
        let mut out = [0.0; 2];
        out[d] = (phi[j] - phi[k]) / g.spacing(d);
        for l in 0..g.dim() {
            if l != d {
                out[l] = avg(g.gradient(phi, k)[l], g.gradient(phi, j)[l]);
            }
        }
        out
    }

    /// Diffusive flux `p a grad phi` normal to face `(k, d)`.
    fn diffusive_flux(&self, phi: &[f64], k: usize, d: usize) -> f64 {
        let grad = self.face_gradient(phi, k, d);
        let a = &self.af[k][d];
        self.pf[k][d] * (a[d][0] * grad[0] + a[d][1] * grad[1])
    }

    fn divergence(&self, face_flux: impl Fn(usize, usize) -> f64, out: &mut [f64]) {
        let g = self.grid;
        for (k, o) in out.iter_mut().enumerate() {
            let mut s = 0.0;
            for d in 0..g.dim() {
                let back = g.neighbor(k, d, false);
                s += (face_flux(k, d) - face_flux(back, d)) / g.spacing(d);
            }
            *o = s;
        }
    }

    /// `-div(p a grad phi)`.
    fn apply(&self, phi: &[f64], out: &mut [f64]) {
        let n = self.grid.len();
        let dim = self.grid.dim();
        let mut flux = vec![[0.0; 2]; n];
        for (k, f) in flux.iter_mut().enumerate() {
            for d in 0..dim {
                f[d] = self.diffusive_flux(phi, k, d);
            }
        }
        self.divergence(|k, d| flux[k][d], out);
        out.iter_mut().for_each(|v| *v = -*v);
    }

    /// `div(p b)`.
    fn drift_divergence(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.len()];
        self.divergence(|k, d| self.pf[k][d] * self.bf[k][d], &mut out);
        out
    }

    fn flux_scale(&self) -> f64 {
        let hmin = (0..self.grid.dim()).map(|d| self.grid.spacing(d)).fold(f64::INFINITY, f64::min);
        let m = (0..self.grid.len())
            .flat_map(|k| (0..self.grid.dim()).map(move |d| (k, d)))
            .map(|(k, d)| (self.pf[k][d] * self.bf[k][d]).abs())
            .fold(0.0, f64::max);
        m / hmin
    }
}

/// Solves `div[p (b + a grad phi)] = 0` by finite volumes on staggered faces.
/// Conjugate gradients are used for diagonal `a`, BiCGSTAB otherwise.
pub fn solve_phi(grid: &PeriodicGrid, coeffs: &DiffusionCoefficients, dens: &DensityField) -> Result<PhiSolution> {
    grid.check(coeffs.a().len())?;
    grid.check(dens.values().len())?;
    let op = FluxOperator::new(grid, coeffs, dens);
    let rhs = op.drift_divergence();
    let scale = op.flux_scale();
    let n = grid.len();
    let symmetric = grid.dim() == 1 || coeffs.is_diagonal();
    let max_iter = 20 * n + 1000;
    let solve = |r: &[f64]| {
        if symmetric {
            linalg::conjugate_gradient(|x, y| op.apply(x, y), r, 1e-12, max_iter)
        } else {
            linalg::bicgstab(|x, y| op.apply(x, y), r, 1e-12, max_iter)
        }
    };
    let mut phi = vec![0.0; n];
    let mut iterations = 0;
    let mut residual_vec = rhs.clone();
    let mut residual = max_norm(&residual_vec);
    // a few rounds of iterative refinement against the true residual
    for _ in 0..4 {
        if residual <= PHI_TOLERANCE * scale {
            break;
        }
        let sol = solve(&residual_vec)?;
        iterations += sol.iterations;
        phi.iter_mut().zip(&sol.x).for_each(|(p, d)| *p += d);
        let mut aphi = vec![0.0; n];
        op.apply(&phi, &mut aphi);
        residual_vec = rhs.iter().zip(&aphi).map(|(r, a)| r - a).collect();
        residual = max_norm(&residual_vec);
    }
    if residual > PHI_TOLERANCE * scale {
        return Err(Error::SolveFailure(format!(
            "flux balance residual {residual:e} exceeds {:e}",
            PHI_TOLERANCE * scale
        )));
    }
    let mean = phi.iter().sum::<f64>() / n as f64;
    phi.iter_mut().for_each(|p| *p -= mean);
    Ok(PhiSolution { phi, residual, scale, iterations })
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Rate value with the auxiliary potential that certifies it.
#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub value: f64,
    /// Fisher-information term, drift term and `phi` term, in that order.
    pub terms: [f64; 3],
    pub phi: PhiSolution,
}

/// General rate `(1/8) int grad p.a grad p / p^2 dmu - (1/2) int b.grad p / p dmu + (1/2) int grad phi.a grad phi dmu`.
pub fn gartner_rate(grid: &PeriodicGrid, coeffs: &DiffusionCoefficients, dens: &DensityField) -> Result<RateReport> {
    let phi = solve_phi(grid, coeffs, dens)?;
    let p = dens.values();
    let (a, b) = (coeffs.a(), coeffs.b());
    let mut terms = [0.0; 3];
    for k in 0..grid.len() {
        let gp = grid.gradient(p, k);
        let w = [gp[0] / p[k], gp[1] / p[k]];
        let gphi = grid.gradient(&phi.phi, k);
        terms[0] += quad_form(&a[k], &w) * p[k];
        terms[1] += (b[k][0] * w[0] + b[k][1] * w[1]) * p[k];
        terms[2] += quad_form(&a[k], &gphi) * p[k];
    }
    let vol = grid.cell_volume();
    let terms = [terms[0] * vol / 8.0, -terms[1] * vol / 2.0, terms[2] * vol / 2.0];
    Ok(RateReport { value: terms.iter().sum(), terms, phi })
}

/// `grad p / p + grad U / T` at node `k`.
fn reversible_integrand(grid: &PeriodicGrid, pot: &PotentialSpec, p: &[f64], k: usize) -> Point {
    let t = pot.temperature();
    let gp = grid.gradient(p, k);
    let gu = pot.grad(&grid.point(k));
    [gp[0] / p[k] + gu[0] / t, gp[1] / p[k] + gu[1] / t]
}

fn check_domain(grid: &PeriodicGrid, pot: &PotentialSpec) -> Result<()> {
    if grid.domain() != pot.domain() {
        return Err(Error::InvalidInput("grid and potential live on different tori".into()));
    }
    Ok(())
}

/// Reversible rate `(T/4) int |grad p/p + grad U/T|^2 dmu`.
pub fn reversible_rate_explicit(grid: &PeriodicGrid, pot: &PotentialSpec, dens: &DensityField) -> Result<f64> {
    check_domain(grid, pot)?;
    grid.check(dens.values().len())?;
    let p = dens.values();
    let s: f64 = (0..grid.len())
        .map(|k| {
            let w = reversible_integrand(grid, pot, p, k);
            (w[0] * w[0] + w[1] * w[1]) * p[k]
        })
        .sum();
    Ok(pot.temperature() / 4.0 * s * grid.cell_volume())
}

/// `Sigma - I` at every node, failing with `NotDominating` where it is indefinite.
fn excess_mobility(grid: &PeriodicGrid, mob: &MobilitySpec) -> Result<Vec<Mat2>> {
    (0..grid.len())
        .map(|k| {
            let mut m = mob.big_sigma(&grid.point(k));
            m[0][0] -= 1.0;
            m[1][1] -= 1.0;
            let lo = sym_eigenvalues(&m, grid.dim()).0;
            if lo < -1e-12 {
                return Err(Error::NotDominating { node: k, min_eig: lo });
            }
            Ok(m)
        })
        .collect()
}

/// Rate gain of the mobility perturbation over the identity mobility:
/// `(T/4) int w^T (Sigma - I) w dmu` with `w = grad p/p + grad U/T`.
pub fn correction_reversible(
    grid: &PeriodicGrid,
    pot: &PotentialSpec,
    mob: &MobilitySpec,
    dens: &DensityField,
) -> Result<f64> {
    check_domain(grid, pot)?;
    grid.check(dens.values().len())?;
    let excess = excess_mobility(grid, mob)?;
    let p = dens.values();
    let s: f64 = (0..grid.len())
        .map(|k| quad_form(&excess[k], &reversible_integrand(grid, pot, p, k)) * p[k])
        .sum();
    Ok(pot.temperature() / 4.0 * s * grid.cell_volume())
}

/// Rate gain of the irreversible drift at fixed mobility:
/// `4T int v^T Sigma v dmu` with `v = grad phi/2 - grad U/(4T)` and `phi` solving the flux
/// balance for `a = 2 T Sigma`, `b = -Sigma grad U + C`.
pub fn correction_irreversible(
    grid: &PeriodicGrid,
    pot: &PotentialSpec,
    mob: &MobilitySpec,
    irr: &IrreversibleDrift,
    dens: &DensityField,
) -> Result<f64> {
    check_domain(grid, pot)?;
    irr.validate(pot, grid.nodes(0).max(grid.nodes(1)))?;
    let coeffs = DiffusionCoefficients::from_model(grid, pot, mob, Some(irr))?;
    let phi = solve_phi(grid, &coeffs, dens)?;
    let t = pot.temperature();
    let p = dens.values();
    let s: f64 = (0..grid.len())
        .map(|k| {
            let x = grid.point(k);
            let gphi = grid.gradient(&phi.phi, k);
            let gu = pot.grad(&x);
            let v = [0.5 * gphi[0] - gu[0] / (4.0 * t), 0.5 * gphi[1] - gu[1] / (4.0 * t)];
            quad_form(&mob.big_sigma(&x), &v) * p[k]
        })
        .sum();
    Ok(4.0 * t * s * grid.cell_volume())
}

/// Sum of the mobility and drift corrections.
pub fn correction_combined(
    grid: &PeriodicGrid,
    pot: &PotentialSpec,
    mob: &MobilitySpec,
    irr: &IrreversibleDrift,
    dens: &DensityField,
) -> Result<f64> {
    Ok(correction_reversible(grid, pot, mob, dens)? + correction_irreversible(grid, pot, mob, irr, dens)?)
}

/// Rates of one density under the three nested dynamics, each from the general formula,
/// together with the correction integrals.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    /// Identity mobility, no drift.
    pub baseline: RateReport,
    /// Perturbed mobility, no drift.
    pub reversible: RateReport,
    /// Perturbed mobility with drift.
    pub full: RateReport,
    pub correction_reversible: f64,
    pub correction_irreversible: f64,
}

pub fn compare_rates(
    grid: &PeriodicGrid,
    pot: &PotentialSpec,
    mob: &MobilitySpec,
    irr: Option<&IrreversibleDrift>,
    dens: &DensityField,
) -> Result<ComparisonReport> {
    check_domain(grid, pot)?;
    let baseline = gartner_rate(grid, &DiffusionCoefficients::reversible(grid, pot)?, dens)?;
    let reversible = gartner_rate(grid, &DiffusionCoefficients::from_model(grid, pot, mob, None)?, dens)?;
    let full = gartner_rate(grid, &DiffusionCoefficients::from_model(grid, pot, mob, irr)?, dens)?;
    let correction_reversible = correction_reversible(grid, pot, mob, dens)?;
    let correction_irreversible = match irr {
        Some(c) => correction_irreversible(grid, pot, mob, c, dens)?,
        None => 0.0,
    };
    Ok(ComparisonReport { baseline, reversible, full, correction_reversible, correction_irreversible })
}
