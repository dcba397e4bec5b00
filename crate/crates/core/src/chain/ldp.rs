//! Donsker–Varadhan rate functions for finite chains.
//!
//! The empirical-measure rate is computed by minimizing the strictly convex
//! functional `Y_k(V) = sum_{i != j} mu(i) k(i,j) exp((V(j) - V(i)) / 2)` over
//! potentials gauge-fixed by `V(0) = 0`; then `I(mu) = sum mu(i) k(i,j) - min Y`.
//! Observable-level rates come from the Legendre transform of the principal
//! eigenvalue of the tilted generator `Q + beta diag(f)`.

use nalgebra::{DMatrix, DVector};

use super::generator::{
    check_len, is_reversible, stationary_measure, GeneratorMatrix, Observable, Perturbation, ProbabilityMeasure,
};
use crate::error::{Error, Result};
use crate::linalg;

/// Rate value with the minimizing potential as a certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct RateCertificate {
    pub value: f64,
    /// Minimizer of `Y`, with `v[0] = 0`.
    pub v: Vec<f64>,
    pub y_min: f64,
    /// Expected escape rate `sum_i mu(i) sum_{j != i} k(i,j)`.
    pub escape: f64,
    /// Max-norm residual of the balance equation at `v`.
    pub residual: f64,
    pub iterations: usize,
}

fn weights(q: &GeneratorMatrix, mu: &ProbabilityMeasure) -> DMatrix<f64> {
    let n = q.n();
    DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { mu[i] * q.rate(i, j) })
}

/// `Y_k(V)` for the off-diagonal rates of `q`.
pub fn y_functional(q: &GeneratorMatrix, mu: &ProbabilityMeasure, v: &[f64]) -> Result<f64> {
    check_len(q.n(), mu.len())?;
    check_len(q.n(), v.len())?;
    let w = weights(q, mu);
    Ok(y_value(&w, v))
}

fn y_value(w: &DMatrix<f64>, v: &[f64]) -> f64 {
    let n = v.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if w[(i, j)] != 0.0 {
                s += w[(i, j)] * (0.5 * (v[j] - v[i])).exp();
            }
        }
    }
    s
}

/// Left side of the balance equation
/// `sum_j [k(i,j) e^{(V(j)-V(i))/2} mu(i) - k(j,i) e^{(V(i)-V(j))/2} mu(j)]` for each `i`.
fn balance_residual(w: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    let n = v.len();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| w[(i, j)] * (0.5 * (v[j] - v[i])).exp() - w[(j, i)] * (0.5 * (v[i] - v[j])).exp())
                .sum()
        })
        .collect()
}

/// Gradient (reduced to `V(1..)`) and Hessian of `Y`.
fn y_derivatives(w: &DMatrix<f64>, v: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
    let n = v.len();
    let mut grad = DVector::zeros(n);
    let mut hess = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if w[(i, j)] == 0.0 {
                continue;
            }
            let t = w[(i, j)] * (0.5 * (v[j] - v[i])).exp();
            grad[j] += 0.5 * t;
            grad[i] -= 0.5 * t;
            let h = 0.25 * t;
            hess[(i, i)] += h;
            hess[(j, j)] += h;
            hess[(i, j)] -= h;
            hess[(j, i)] -= h;
        }
    }
    (
        grad.rows(1, n - 1).into_owned(),
        hess.view((1, 1), (n - 1, n - 1)).into_owned(),
    )
}

/// Donsker–Varadhan rate `I(mu)` of the chain with generator `q`.
pub fn dv_rate_chain(q: &GeneratorMatrix, mu: &ProbabilityMeasure) -> Result<RateCertificate> {
    check_len(q.n(), mu.len())?;
    if !q.is_irreducible() {
        return Err(Error::NotIrreducible);
    }
    let n = q.n();
    let w = weights(q, mu);
    let escape: f64 = w.iter().sum();
    let tol = 1e-12 * escape.max(1.0);
    let accept = 1e-8 * escape.max(1.0);

    let mut v = vec![0.0; n];
    let mut y = y_value(&w, &v);
    let max_iter = 500;
    for it in 0..max_iter {
        let residual = balance_residual(&w, &v).iter().fold(0.0_f64, |a, r| a.max(r.abs()));
        if residual <= tol {
            return Ok(certificate(escape, y, v, residual, it));
        }
        let (grad, hess) = y_derivatives(&w, &v);
        let direction = match hess.clone().cholesky() {
            Some(ch) => {
                let d = -ch.solve(&grad);
                if d.dot(&grad) < 0.0 {
                    d
                } else {
                    -grad.clone()
                }
            }
            None => -grad.clone(),
        };
        let slope = direction.dot(&grad);
        // Armijo backtracking
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = std::iter::once(0.0)
                .chain((0..n - 1).map(|k| v[k + 1] + step * direction[k]))
                .collect();
            let y_trial = y_value(&w, &trial);
            if y_trial <= y + 1e-4 * step * slope || (y_trial - y).abs() <= 1e-15 * y.abs() {
                v = trial;
                y = y_trial;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let residual = balance_residual(&w, &v).iter().fold(0.0_f64, |a, r| a.max(r.abs()));
    if residual <= accept {
        return Ok(certificate(escape, y, v, residual, max_iter));
    }
    Err(Error::OptFailure(format!("balance residual {residual:e} above {accept:e}")))
}

fn certificate(escape: f64, y_min: f64, v: Vec<f64>, residual: f64, iterations: usize) -> RateCertificate {
    RateCertificate { value: escape - y_min, v, y_min, escape, residual, iterations }
}

/// One-sided variational bound `-sum_i mu(i) (Q u)(i) / u(i) <= I(mu)` for a positive test function `u`.
pub fn dv_lower_bound(q: &GeneratorMatrix, mu: &ProbabilityMeasure, u: &[f64]) -> Result<f64> {
    check_len(q.n(), mu.len())?;
    check_len(q.n(), u.len())?;
    if u.iter().any(|x| !(*x > 0.0)) {
        return Err(Error::InvalidInput("test function must be strictly positive".into()));
    }
    let qu = q.matrix() * DVector::from_column_slice(u);
    Ok(-(0..q.n()).map(|i| mu[i] * qu[i] / u[i]).sum::<f64>())
}

/// Both sides of the rate-gap identity for an irreversible perturbation `a` of a reversible `q0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateGapIdentity {
    /// `I_Gamma(mu) - I_0(mu)`.
    pub lhs: f64,
    /// `Y_{k0}(V0) - Y_{kGamma}(VGamma)`.
    pub rhs: f64,
}

pub fn rate_gap_identity(
    q0: &GeneratorMatrix,
    a: &Perturbation,
    pi: &ProbabilityMeasure,
    mu: &ProbabilityMeasure,
) -> Result<RateGapIdentity> {
    check_len(q0.n(), a.n())?;
    check_len(q0.n(), pi.len())?;
    if !is_reversible(q0, pi)? {
        return Err(Error::InvalidInput("base generator is not reversible with respect to pi".into()));
    }
    let n = q0.n();
    let m = a.matrix();
    let scale = linalg::max_abs(m).max(1.0);
    for j in 0..n {
        let col: f64 = (0..n).map(|i| pi[i] * m[(i, j)]).sum();
        if col.abs() > 1e-10 * scale {
            return Err(Error::InvalidInput(format!("perturbation does not preserve pi (column {j}: {col:e})")));
        }
        for i in 0..n {
            if (pi[i] * m[(i, j)] + pi[j] * m[(j, i)]).abs() > 1e-10 * scale {
                return Err(Error::InvalidInput("perturbation is not anti-self-adjoint".into()));
            }
        }
    }
    let q = q0.perturb(a)?;
    let base = dv_rate_chain(q0, mu)?;
    let pert = dv_rate_chain(&q, mu)?;
    Ok(RateGapIdentity { lhs: pert.value - base.value, rhs: base.y_min - pert.y_min })
}

/// Principal eigenvalue of `Q + beta diag(f)` with its first two `beta`-derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TiltedReport {
    pub beta: f64,
    pub lambda: f64,
    /// `d lambda / d beta`.
    pub derivative: f64,
    /// `d^2 lambda / d beta^2`.
    pub second_derivative: f64,
}

/// Right and left Perron vectors of a Metzler matrix at eigenvalue `lambda`.
fn perron_vectors(m: &DMatrix<f64>, lambda: f64) -> Result<(DVector<f64>, DVector<f64>)> {
    let n = m.nrows();
    let scale = linalg::max_abs(m).max(1.0);
    let shift = lambda + 1e-9 * scale;
    let inverse_iterate = |mat: DMatrix<f64>| -> Result<DVector<f64>> {
        let shifted = mat - DMatrix::identity(n, n) * shift;
        let lu = shifted.lu();
        let mut x = DVector::from_element(n, 1.0 / (n as f64).sqrt());
        for _ in 0..4 {
            let y = lu
                .solve(&x)
                .ok_or_else(|| Error::EigFailure("inverse iteration hit a singular shift".into()))?;
            let norm = y.norm();
            if !norm.is_finite() || norm == 0.0 {
                return Err(Error::EigFailure("inverse iteration diverged".into()));
            }
            x = y / norm;
        }
        if x.sum() < 0.0 {
            x = -x;
        }
        let floor = -1e-8 * x.amax();
        if x.iter().any(|v| *v < floor) {
            return Err(Error::EigFailure("principal eigenvector is not positive".into()));
        }
        Ok(x)
    };
    Ok((inverse_iterate(m.clone())?, inverse_iterate(m.transpose())?))
}

fn tilted_matrix(q: &GeneratorMatrix, f: &Observable, beta: f64) -> DMatrix<f64> {
    let mut m = q.matrix().clone();
    for i in 0..q.n() {
        m[(i, i)] += beta * f[i];
    }
    m
}

pub fn tilted_eigenvalue(q: &GeneratorMatrix, f: &Observable, beta: f64) -> Result<TiltedReport> {
    check_len(q.n(), f.len())?;
    if !q.is_irreducible() {
        return Err(Error::NotIrreducible);
    }
    if !beta.is_finite() {
        return Err(Error::InvalidInput(format!("beta must be finite, got {beta}")));
    }
    let n = q.n();
    let m = tilted_matrix(q, f, beta);
    let (lambda, v, u) = if beta == 0.0 {
        let pi = stationary_measure(q)?;
        (0.0, DVector::from_element(n, 1.0), DVector::from_column_slice(pi.weights()))
    } else {
        let ev = linalg::eigenvalues(&m)?;
        let top = ev
            .iter()
            .copied()
            .max_by(|a, b| a.re.total_cmp(&b.re))
            .expect("nonempty spectrum");
        let (v, u) = perron_vectors(&m, top.re)?;
        let lambda = u.dot(&(&m * &v)) / u.dot(&v);
        (lambda, v, u)
    };
    let uv = u.dot(&v);
    let fv = DVector::from_iterator(n, (0..n).map(|i| f[i] * v[i]));
    let derivative = u.dot(&fv) / uv;

    // v' from the bordered system [[M - lambda, v], [u^T, 0]] [v'; s] = [(lambda' - F) v; 0]
    let mut bordered = DMatrix::zeros(n + 1, n + 1);
    bordered.view_mut((0, 0), (n, n)).copy_from(&m);
    for i in 0..n {
        bordered[(i, i)] -= lambda;
        bordered[(i, n)] = v[i];
        bordered[(n, i)] = u[i];
    }
    let mut rhs = DVector::zeros(n + 1);
    for i in 0..n {
        rhs[i] = (derivative - f[i]) * v[i];
    }
    let sol = linalg::lu_solve(bordered, &rhs).map_err(|e| Error::EigFailure(format!("eigenvector derivative: {e}")))?;
    let second: f64 = 2.0 * (0..n).map(|i| u[i] * f[i] * sol[i]).sum::<f64>() / uv;

    Ok(TiltedReport { beta, lambda, derivative, second_derivative: second })
}

/// Legendre transform of the tilted eigenvalue at level `ell`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservableRate {
    pub value: f64,
    /// Maximizer `beta` with `lambda'(beta) = ell`.
    pub beta: f64,
    pub iterations: usize,
}

/// Rate `sup_beta (ell beta - lambda(beta f))` of the ergodic average of `f`.
pub fn observable_rate(q: &GeneratorMatrix, f: &Observable, ell: f64) -> Result<ObservableRate> {
    check_len(q.n(), f.len())?;
    let (fmin, fmax) = (f.min(), f.max());
    if !(ell > fmin && ell < fmax) {
        return Err(Error::OutOfRange { ell, min: fmin, max: fmax });
    }
    legendre_newton(|beta| tilted_eigenvalue(q, f, beta), ell, fmax - fmin)
}

/// Safeguarded Newton iteration for `lambda'(beta) = ell` using the exact second derivative.
pub(crate) fn legendre_newton<F>(tilted: F, ell: f64, range: f64) -> Result<ObservableRate>
where
    F: Fn(f64) -> Result<TiltedReport>,
{
    let tol = 1e-12 * range.max(1e-300);
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    let mut beta = 0.0;
    for it in 0..300 {
        let r = tilted(beta)?;
        let g = r.derivative - ell;
        if g.abs() <= tol {
            return Ok(ObservableRate { value: ell * beta - r.lambda, beta, iterations: it });
        }
        if g < 0.0 {
            lo = beta;
        } else {
            hi = beta;
        }
        let newton = if r.second_derivative > 0.0 { beta - g / r.second_derivative } else { f64::NAN };
        // cap the step so far-field Newton jumps cannot overflow the exponentials
        let cap = 4.0 * (1.0 + beta.abs()) / range.max(1e-300);
        let mut next = if newton.is_finite() && (newton - beta).abs() <= cap { newton } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = match (lo.is_finite(), hi.is_finite()) {
                (true, true) => 0.5 * (lo + hi),
                (true, false) => beta + cap,
                (false, true) => beta - cap,
                (false, false) => unreachable!("one side of the bracket is always set"),
            };
        }
        if next == beta {
            return Ok(ObservableRate { value: ell * beta - r.lambda, beta, iterations: it });
        }
        beta = next;
    }
    Err(Error::NewtonFailure(format!("no convergence for ell = {ell}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_vanishes_at_stationarity() {
        let q = GeneratorMatrix::from_rows(&[
            vec![-1.0, 0.6, 0.4],
            vec![0.2, -0.5, 0.3],
            vec![0.9, 0.1, -1.0],
        ])
        .unwrap();
        let pi = stationary_measure(&q).unwrap();
        let c = dv_rate_chain(&q, &pi).unwrap();
        assert!(c.value.abs() < 1e-10);
        assert!(c.v.iter().all(|x| x.abs() < 1e-8));
    }

    #[test]
    fn two_state_closed_form() {
        let q = GeneratorMatrix::two_state(1.0, 1.0).unwrap();
        let mu = ProbabilityMeasure::new(vec![0.9, 0.1]).unwrap();
        let c = dv_rate_chain(&q, &mu).unwrap();
        assert!((c.value - 0.4).abs() < 1e-12, "{}", c.value);
        assert!((c.value - (c.escape - c.y_min)).abs() < 1e-14);
        assert!(c.residual < 1e-8);
    }

    #[test]
    fn reducible_chain_has_no_rate() {
        let q = GeneratorMatrix::from_rows(&[vec![-1.0, 1.0], vec![0.0, 0.0]]).unwrap();
        assert_eq!(dv_rate_chain(&q, &ProbabilityMeasure::uniform(2)), Err(Error::NotIrreducible));
    }

    #[test]
    fn tilted_at_zero_is_exactly_zero() {
        let q = GeneratorMatrix::two_state(1.0, 3.0).unwrap();
        let f = Observable::new(vec![2.0, -1.0]).unwrap();
        let r = tilted_eigenvalue(&q, &f, 0.0).unwrap();
        assert_eq!(r.lambda, 0.0);
        // fbar = 0.75 * 2 - 0.25
        assert!((r.derivative - 1.25).abs() < 1e-14);
    }

    #[test]
    fn tilted_constant_shift() {
        let q = GeneratorMatrix::two_state(1.0, 3.0).unwrap();
        let r = tilted_eigenvalue(&q, &Observable::constant(2, 1.5), 0.7).unwrap();
        assert!((r.lambda - 1.05).abs() < 1e-12);
        assert!((r.derivative - 1.5).abs() < 1e-10);
    }

    #[test]
    fn tilted_two_state_closed_form() {
        // lambda(beta) = (beta - 2 + sqrt(4 + beta^2)) / 2 for a = b = 1, f = (1, 0)
        let q = GeneratorMatrix::two_state(1.0, 1.0).unwrap();
        let f = Observable::new(vec![1.0, 0.0]).unwrap();
        for beta in [-3.0, -0.5, 0.0, 0.25, 2.0] {
            let r = tilted_eigenvalue(&q, &f, beta).unwrap();
            let s = (4.0_f64 + beta * beta).sqrt();
            assert!((r.lambda - (beta - 2.0 + s) / 2.0).abs() < 1e-12);
            assert!((r.derivative - (1.0 + beta / s) / 2.0).abs() < 1e-10);
            assert!((r.second_derivative - 2.0 / s.powi(3)).abs() < 1e-9);
        }
    }

    #[test]
    fn observable_rate_is_zero_at_mean_and_rejects_edges() {
        let q = GeneratorMatrix::two_state(1.0, 3.0).unwrap();
        let f = Observable::new(vec![1.0, 0.0]).unwrap();
        let r = observable_rate(&q, &f, 0.75).unwrap();
        assert!(r.value.abs() < 1e-12);
        assert!(matches!(observable_rate(&q, &f, 1.0), Err(Error::OutOfRange { .. })));
        assert!(matches!(observable_rate(&q, &f, -0.2), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn lower_bound_is_tight_at_certificate() {
        let q = GeneratorMatrix::from_rows(&[
            vec![-1.0, 0.6, 0.4],
            vec![0.2, -0.5, 0.3],
            vec![0.9, 0.1, -1.0],
        ])
        .unwrap();
        let mu = ProbabilityMeasure::new(vec![0.2, 0.5, 0.3]).unwrap();
        let c = dv_rate_chain(&q, &mu).unwrap();
        let u: Vec<f64> = c.v.iter().map(|x| (0.5 * x).exp()).collect();
        let lb = dv_lower_bound(&q, &mu, &u).unwrap();
        assert!((lb - c.value).abs() < 1e-10);
        assert!(dv_lower_bound(&q, &mu, &[1.0, 2.0, 0.5]).unwrap() <= c.value + 1e-12);
    }
}
