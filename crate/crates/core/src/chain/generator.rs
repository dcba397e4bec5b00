//! Rate matrices, probability vectors and observables on a finite state space.

use std::collections::VecDeque;
use std::ops::Add;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

const ROW_SUM_TOL: f64 = 1e-12;
const MEASURE_SUM_TOL: f64 = 1e-12;

fn row_tolerance(q: &DMatrix<f64>, i: usize) -> f64 {
    let scale = q.row(i).iter().fold(1.0_f64, |acc, v| acc.max(v.abs()));
    ROW_SUM_TOL * scale
}

fn check_square(q: &DMatrix<f64>) -> Result<usize> {
    let n = q.nrows();
    if q.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: q.ncols() });
    }
    if n < 2 {
        return Err(Error::InvalidGenerator(format!("need at least 2 states, got {n}")));
    }
    if q.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidGenerator("non-finite entry".into()));
    }
    for i in 0..n {
        let s: f64 = q.row(i).sum();
        if s.abs() > row_tolerance(q, i) {
            return Err(Error::InvalidGenerator(format!("row {i} sums to {s:e}")));
        }
    }
    Ok(n)
}

/// Rate matrix of a continuous-time Markov chain: nonnegative off-diagonal
/// rates and zero row sums.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorMatrix {
    q: DMatrix<f64>,
}

impl GeneratorMatrix {
    pub fn new(q: DMatrix<f64>) -> Result<Self> {
        let n = check_square(&q)?;
        for i in 0..n {
            for j in 0..n {
                if i != j && q[(i, j)] < 0.0 {
                    return Err(Error::InvalidGenerator(format!(
                        "negative rate {:e} at ({i}, {j})",
                        q[(i, j)]
                    )));
                }
            }
        }
        Ok(Self { q })
    }

    /// Builds a generator from off-diagonal rates; the diagonal of `rates` is ignored
    /// and replaced by the negative row sum.
    pub fn from_rates(mut rates: DMatrix<f64>) -> Result<Self> {
        let n = rates.nrows();
        for i in 0..n {
            rates[(i, i)] = 0.0;
            let s: f64 = rates.row(i).sum();
            rates[(i, i)] = -s;
        }
        Self::new(rates)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::DimensionMismatch { expected: n, got: bad.len() });
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::new(DMatrix::from_row_slice(n, n, &flat))
    }

    /// Two-state chain with rate `a` from state 0 to 1 and `b` from 1 to 0.
    pub fn two_state(a: f64, b: f64) -> Result<Self> {
        Self::new(DMatrix::from_row_slice(2, 2, &[-a, a, b, -b]))
    }

    pub fn n(&self) -> usize {
        self.q.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.q
    }

    pub fn rate(&self, i: usize, j: usize) -> f64 {
        self.q[(i, j)]
    }

    /// `(Q f)(i) = sum_j Q(i,j) f(j)`.
    pub fn apply(&self, f: &Observable) -> Result<Observable> {
        check_len(self.n(), f.len())?;
        let v = &self.q * DVector::from_column_slice(f.values());
        Ok(Observable(v.iter().copied().collect()))
    }

    pub fn is_irreducible(&self) -> bool {
        let n = self.n();
        let reach = |forward: bool| {
            let mut seen = vec![false; n];
            let mut queue = VecDeque::from([0usize]);
            seen[0] = true;
            while let Some(i) = queue.pop_front() {
                for j in 0..n {
                    let w = if forward { self.q[(i, j)] } else { self.q[(j, i)] };
                    if i != j && w > 0.0 && !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
            seen.into_iter().all(|s| s)
        };
        reach(true) && reach(false)
    }

    /// Adds a signed perturbation, rejecting results with negative rates.
    pub fn perturb(&self, p: &Perturbation) -> Result<GeneratorMatrix> {
        check_len(self.n(), p.n())?;
        let sum = &self.q + &p.m;
        let n = self.n();
        let mut min_off = f64::INFINITY;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    min_off = min_off.min(sum[(i, j)]);
                }
            }
        }
        if min_off < 0.0 {
            // rounding at the exact admissibility boundary
            let tol = 1e-12 * linalg::max_abs(&sum).max(1.0);
            if min_off < -tol {
                return Err(Error::NotAdmissible(min_off));
            }
            let mut clipped = sum;
            for i in 0..n {
                for j in 0..n {
                    if i != j && clipped[(i, j)] < 0.0 {
                        clipped[(i, j)] = 0.0;
                    }
                }
            }
            return GeneratorMatrix::from_rates(clipped);
        }
        GeneratorMatrix::new(sum)
    }
}

/// Signed zero-row-sum matrix added to a generator (Peskun or cycle perturbation).
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    m: DMatrix<f64>,
}

impl Perturbation {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        check_square(&m)?;
        Ok(Self { m })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::DimensionMismatch { expected: n, got: bad.len() });
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::new(DMatrix::from_row_slice(n, n, &flat))
    }

    pub fn zero(n: usize) -> Self {
        Self { m: DMatrix::zeros(n, n) }
    }

    pub fn n(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { m: &self.m * s }
    }

    pub fn is_zero(&self) -> bool {
        self.m.iter().all(|v| *v == 0.0)
    }
}

impl Add for &Perturbation {
    type Output = Perturbation;

    fn add(self, rhs: &Perturbation) -> Perturbation {
        Perturbation { m: &self.m + &rhs.m }
    }
}

impl From<GeneratorMatrix> for Perturbation {
    fn from(g: GeneratorMatrix) -> Self {
        Perturbation { m: g.q }
    }
}

/// Strictly positive probability vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMeasure(Vec<f64>);

impl ProbabilityMeasure {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::InvalidMeasure("empty".into()));
        }
        if let Some((i, v)) = w.iter().enumerate().find(|(_, v)| !(**v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidMeasure(format!("weight {v} at state {i} is not positive")));
        }
        let s: f64 = w.iter().sum();
        if (s - 1.0).abs() > MEASURE_SUM_TOL {
            return Err(Error::InvalidMeasure(format!("weights sum to {s}")));
        }
        Ok(Self(w))
    }

    /// Normalizes positive weights.
    pub fn from_weights(w: &[f64]) -> Result<Self> {
        let s: f64 = w.iter().sum();
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::InvalidMeasure(format!("total weight {s}")));
        }
        Self::new(w.iter().map(|v| v / s).collect())
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    /// `pi(i) = exp(-h(i)) / Z`.
    pub fn gibbs(h: &[f64]) -> Result<Self> {
        let m = h.iter().copied().fold(f64::INFINITY, f64::min);
        let w: Vec<f64> = h.iter().map(|v| (-(v - m)).exp()).collect();
        Self::from_weights(&w)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn expectation(&self, f: &Observable) -> Result<f64> {
        check_len(self.len(), f.len())?;
        Ok(self.0.iter().zip(f.values()).map(|(p, v)| p * v).sum())
    }
}

impl std::ops::Index<usize> for ProbabilityMeasure {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Real-valued function on the state space.
#[derive(Debug, Clone, PartialEq)]
pub struct Observable(Vec<f64>);

impl Observable {
    pub fn new(f: Vec<f64>) -> Result<Self> {
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("observable has non-finite entries".into()));
        }
        Ok(Self(f))
    }

    pub fn constant(n: usize, c: f64) -> Self {
        Self(vec![c; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn shifted(&self, c: f64) -> Self {
        Self(self.0.iter().map(|v| v + c).collect())
    }
}

impl std::ops::Index<usize> for Observable {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// Invariant distribution of an irreducible generator.
///
/// Solves `Q^T pi = 0` with the last equation replaced by `sum(pi) = 1`.
pub fn stationary_measure(q: &GeneratorMatrix) -> Result<ProbabilityMeasure> {
    if !q.is_irreducible() {
        return Err(Error::NotIrreducible);
    }
    let n = q.n();
    let mut a = q.matrix().transpose();
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    let pi = linalg::lu_solve(a, &b)?;
    if pi.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::SolveFailure("stationary vector is not strictly positive".into()));
    }
    let residual = (q.matrix().transpose() * &pi).amax();
    let scale = linalg::max_abs(q.matrix()).max(1.0);
    if residual > 1e-10 * scale {
        return Err(Error::SolveFailure(format!(
            "null space is not one-dimensional (residual {residual:e})"
        )));
    }
    ProbabilityMeasure::from_weights(pi.as_slice())
}

/// Detailed balance `pi(i) Q(i,j) = pi(j) Q(j,i)` up to relative tolerance 1e-10.
pub fn is_reversible(q: &GeneratorMatrix, pi: &ProbabilityMeasure) -> Result<bool> {
    check_len(q.n(), pi.len())?;
    let n = q.n();
    let floor = 1e-300;
    for i in 0..n {
        for j in (i + 1)..n {
            let fwd = pi[i] * q.rate(i, j);
            let bwd = pi[j] * q.rate(j, i);
            let scale = fwd.abs().max(bwd.abs()).max(floor);
            if (fwd - bwd).abs() > 1e-10 * scale {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// `<f, g>_pi = sum_i pi(i) f(i) g(i)`.
pub fn weighted_inner(pi: &ProbabilityMeasure, f: &Observable, g: &Observable) -> Result<f64> {
    check_len(pi.len(), f.len())?;
    check_len(pi.len(), g.len())?;
    Ok((0..pi.len()).map(|i| pi[i] * f[i] * g[i]).sum())
}
