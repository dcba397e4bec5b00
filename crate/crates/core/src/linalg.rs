//! Small dense and matrix-free linear algebra helpers shared by the chain and grid code.

use nalgebra::{Complex, DMatrix, DVector, Schur};

use crate::error::{Error, Result};

/// Solve `a x = b` by partial-pivot LU, rejecting singular or non-finite outcomes.
pub fn lu_solve(a: DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let lu = a.lu();
    let x = lu
        .solve(b)
        .ok_or_else(|| Error::SolveFailure("matrix is singular".into()))?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SolveFailure("solution is not finite".into()));
    }
    Ok(x)
}

/// All eigenvalues of a real square matrix via the real Schur form.
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    let n = m.nrows();
    let schur = Schur::try_new(m.clone(), 1e-15, 1000 * n.max(10))
        .ok_or_else(|| Error::EigFailure(format!("Schur iteration did not converge (n = {n})")))?;
    let ev = schur.complex_eigenvalues();
    if ev.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::EigFailure("non-finite eigenvalue".into()));
    }
    Ok(ev.iter().copied().collect())
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn remove_mean(v: &mut [f64]) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= m);
}

/// Outcome of a Krylov solve.
#[derive(Debug, Clone)]
pub struct KrylovSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Conjugate gradients for a symmetric positive semidefinite operator whose
/// null space is the constant vector. Iterates stay in the mean-zero subspace.
pub fn conjugate_gradient<F>(apply: F, rhs: &[f64], rel_tol: f64, max_iter: usize) -> Result<KrylovSolution>
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = rhs.len();
    let mut b = rhs.to_vec();
    remove_mean(&mut b);
    let b_norm = dot(&b, &b).sqrt();
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return Ok(KrylovSolution { x, iterations: 0, relative_residual: 0.0 });
    }
    let mut r = b.clone();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr = dot(&r, &r);
    for it in 1..=max_iter {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            return Err(Error::SolveFailure(format!("CG breakdown at iteration {it} (pAp = {pap:e})")));
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        // drift back into range(A) from rounding
        if it % 50 == 0 {
            remove_mean(&mut r);
        }
        let rr_new = dot(&r, &r);
        let rel = rr_new.sqrt() / b_norm;
        if rel <= rel_tol {
            remove_mean(&mut x);
            return Ok(KrylovSolution { x, iterations: it, relative_residual: rel });
        }
        let beta = rr_new / rr;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
    }
    Err(Error::SolveFailure(format!(
        "CG did not reach relative residual {rel_tol:e} in {max_iter} iterations"
    )))
}

/// BiCGSTAB for a general operator with the constant vector as its only null
/// direction; the right-hand side and iterates are kept mean-zero.
pub fn bicgstab<F>(apply: F, rhs: &[f64], rel_tol: f64, max_iter: usize) -> Result<KrylovSolution>
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = rhs.len();
    let mut b = rhs.to_vec();
    remove_mean(&mut b);
    let b_norm = dot(&b, &b).sqrt();
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return Ok(KrylovSolution { x, iterations: 0, relative_residual: 0.0 });
    }
    let mut r = b.clone();
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut t = vec![0.0; n];
    for it in 1..=max_iter {
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 || !rho_new.is_finite() {
            return Err(Error::SolveFailure(format!("BiCGSTAB breakdown at iteration {it}")));
        }
        let beta = (rho_new / rho) * (alpha / omega);
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        apply(&p, &mut v);
        alpha = rho_new / dot(&r_hat, &v);
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        apply(&s, &mut t);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        for i in 0..n {
            x[i] += alpha * p[i] + omega * s[i];
            r[i] = s[i] - omega * t[i];
        }
        rho = rho_new;
        let rel = dot(&r, &r).sqrt() / b_norm;
        if rel <= rel_tol {
            remove_mean(&mut x);
            return Ok(KrylovSolution { x, iterations: it, relative_residual: rel });
        }
        if omega == 0.0 {
            return Err(Error::SolveFailure(format!("BiCGSTAB stagnated at iteration {it}")));
        }
    }
    Err(Error::SolveFailure(format!(
        "BiCGSTAB did not reach relative residual {rel_tol:e} in {max_iter} iterations"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ring_laplacian(x: &[f64], out: &mut [f64]) {
        let n = x.len();
        for i in 0..n {
            out[i] = 2.0 * x[i] - x[(i + 1) % n] - x[(i + n - 1) % n];
        }
    }

    #[test]
    fn cg_solves_periodic_poisson() {
        let n = 64;
        let rhs: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * i as f64 / n as f64).sin())
            .collect();
        let sol = conjugate_gradient(ring_laplacian, &rhs, 1e-13, 500).unwrap();
        let mut out = vec![0.0; n];
        ring_laplacian(&sol.x, &mut out);
        for i in 0..n {
            assert!((out[i] - rhs[i]).abs() < 1e-10);
        }
        assert!(sol.x.iter().sum::<f64>().abs() < 1e-10);
    }

    #[test]
    fn bicgstab_matches_cg_on_symmetric_problem() {
        let n = 32;
        let rhs: Vec<f64> = (0..n).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
        let a = conjugate_gradient(ring_laplacian, &rhs, 1e-13, 500).unwrap();
        let b = bicgstab(ring_laplacian, &rhs, 1e-13, 500).unwrap();
        for i in 0..n {
            assert!((a.x[i] - b.x[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn eigenvalues_of_two_state_generator() {
        let m = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -1.0]);
        let mut ev: Vec<f64> = eigenvalues(&m).unwrap().iter().map(|z| z.re).collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((ev[0] + 2.0).abs() < 1e-12 && ev[1].abs() < 1e-12);
    }

    #[test]
    fn singular_lu_is_reported() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(
            lu_solve(m, &DVector::from_vec(vec![1.0, 2.0])),
            Err(Error::SolveFailure(_))
        ));
    }
}
