//! Spectral gap and asymptotic variance of a chain, computed exactly from the
//! generator and estimated from simulated trajectories.

use nalgebra::{Complex, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;

use super::generator::{check_len, GeneratorMatrix, Observable, ProbabilityMeasure};
use crate::error::{Error, Result};
use crate::linalg;

/// Eigenvalues of a generator and the largest real part of its nonzero spectrum.
#[derive(Debug, Clone)]
pub struct SpectralReport {
    pub gap: f64,
    pub eigenvalues: Vec<Complex<f64>>,
}

pub fn spectral_gap(q: &GeneratorMatrix) -> Result<SpectralReport> {
    if !q.is_irreducible() {
        return Err(Error::NotIrreducible);
    }
    let eigenvalues = linalg::eigenvalues(q.matrix())?;
    let scale = linalg::max_abs(q.matrix()).max(1.0);
    // irreducible: the zero eigenvalue is simple, so drop exactly the one closest to 0
    let (zero_idx, zero) = eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
        .map(|(i, z)| (i, *z))
        .expect("n >= 2");
    if zero.norm() > 1e-8 * scale {
        return Err(Error::EigFailure(format!("no eigenvalue near 0 (closest {zero})")));
    }
    let gap = eigenvalues
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != zero_idx)
        .map(|(_, z)| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
        .min(0.0);
    Ok(SpectralReport { gap, eigenvalues })
}

/// `sigma^2(f) = 2 <f~, (-Q)^{-1} f~>_pi` with `f~ = f - <f, pi>`.
///
/// The Poisson equation is solved through the nonsingular matrix `-Q + 1 pi^T`,
/// whose solution automatically satisfies `<g, 1>_pi = 0` because `<f~, 1>_pi = 0`.
pub fn asymptotic_variance(q: &GeneratorMatrix, pi: &ProbabilityMeasure, f: &Observable) -> Result<f64> {
    let g = poisson_solution(q, pi, f)?;
    let fbar = pi.expectation(f)?;
    let v: f64 = (0..q.n()).map(|i| pi[i] * (f[i] - fbar) * g[i]).sum();
    Ok(2.0 * v)
}

/// Mean-zero solution `g` of `-Q g = f - <f, pi>`.
pub fn poisson_solution(q: &GeneratorMatrix, pi: &ProbabilityMeasure, f: &Observable) -> Result<Vec<f64>> {
    check_len(q.n(), pi.len())?;
    check_len(q.n(), f.len())?;
    let n = q.n();
    let fbar = pi.expectation(f)?;
    let centered = DVector::from_iterator(n, f.values().iter().map(|v| v - fbar));
    if centered.iter().all(|v| *v == 0.0) {
        return Ok(vec![0.0; n]);
    }
    let mut a: DMatrix<f64> = -q.matrix();
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] += pi[j];
        }
    }
    let g = linalg::lu_solve(a, &centered)?;
    Ok(g.iter().copied().collect())
}

/// Piecewise-constant path of a jump process.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<usize>,
    pub holding_times: Vec<f64>,
    pub total_time: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Precomputed jump tables for Gillespie sampling.
struct JumpTable {
    exit: Vec<Exp<f64>>,
    cumulative: Vec<Vec<(usize, f64)>>,
}

impl JumpTable {
    fn new(q: &GeneratorMatrix) -> Result<Self> {
        let n = q.n();
        let mut exit = Vec::with_capacity(n);
        let mut cumulative = Vec::with_capacity(n);
        for i in 0..n {
            let rate = -q.rate(i, i);
            if !(rate > 0.0) {
                return Err(Error::AbsorbingState(i));
            }
            exit.push(Exp::new(rate).map_err(|e| Error::InvalidInput(e.to_string()))?);
            let mut acc = 0.0;
            let mut row = Vec::new();
            for j in 0..n {
                if j != i && q.rate(i, j) > 0.0 {
                    acc += q.rate(i, j) / rate;
                    row.push((j, acc));
                }
            }
            cumulative.push(row);
        }
        Ok(Self { exit, cumulative })
    }

    fn jump<R: Rng>(&self, i: usize, rng: &mut R) -> usize {
        let row = &self.cumulative[i];
        let total = row.last().map(|r| r.1).unwrap_or(1.0);
        let u: f64 = rng.random::<f64>() * total;
        row.iter().find(|(_, c)| u < *c).unwrap_or(row.last().expect("non-absorbing")).0
    }

    /// Runs until `t_max`, calling `visit(state, holding)` for each sojourn;
    /// the last one is truncated at `t_max`.
    fn run<R: Rng>(&self, x0: usize, t_max: f64, rng: &mut R, mut visit: impl FnMut(usize, f64)) {
        let mut t = 0.0;
        let mut x = x0;
        loop {
            let hold = self.exit[x].sample(rng);
            if t + hold >= t_max {
                visit(x, t_max - t);
                return;
            }
            visit(x, hold);
            t += hold;
            x = self.jump(x, rng);
        }
    }
}

/// Random stream for replica `stream` under `seed`; independent of scheduling.
pub fn replica_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Gillespie simulation started at `x0` up to time `t_max`.
pub fn simulate_ctmc(q: &GeneratorMatrix, x0: usize, t_max: f64, seed: u64) -> Result<Trajectory> {
    if x0 >= q.n() {
        return Err(Error::IndexOutOfRange { index: x0, n: q.n() });
    }
    if !(t_max > 0.0) || !t_max.is_finite() {
        return Err(Error::InvalidInput(format!("t_max must be positive, got {t_max}")));
    }
    let table = JumpTable::new(q)?;
    let mut rng = replica_rng(seed, 0);
    let mut states = Vec::new();
    let mut holding_times = Vec::new();
    table.run(x0, t_max, &mut rng, |x, h| {
        states.push(x);
        holding_times.push(h);
    });
    Ok(Trajectory { states, holding_times, total_time: t_max })
}

/// Time-weighted average of `f` along the trajectory.
pub fn ergodic_average(traj: &Trajectory, f: &Observable) -> Result<f64> {
    if traj.is_empty() || !(traj.total_time > 0.0) {
        return Err(Error::EmptyTrajectory);
    }
    if let Some(&index) = traj.states.iter().find(|&&s| s >= f.len()) {
        return Err(Error::IndexOutOfRange { index, n: f.len() });
    }
    let s: f64 = traj.states.iter().zip(&traj.holding_times).map(|(&x, h)| f[x] * h).sum();
    Ok(s / traj.total_time)
}

/// Monte Carlo estimate of the asymptotic variance from independent replicas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceEstimate {
    /// Mean of the replica ergodic averages.
    pub mean: f64,
    /// `t` times the sample variance of the replica averages.
    pub scaled_variance: f64,
    /// Normal-theory standard error of `scaled_variance`.
    pub std_error: f64,
    pub replicas: usize,
}

impl VarianceEstimate {
    pub fn from_averages(averages: &[f64], t: f64) -> Self {
        let r = averages.len();
        let mean = averages.iter().sum::<f64>() / r as f64;
        let var = averages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (r as f64 - 1.0);
        let scaled_variance = t * var;
        Self {
            mean,
            scaled_variance,
            std_error: scaled_variance * (2.0 / (r as f64 - 1.0)).sqrt(),
            replicas: r,
        }
    }

    /// Standard error of the mean of the replica averages.
    pub fn mean_std_error(&self, t: f64) -> f64 {
        (self.scaled_variance / t / self.replicas as f64).sqrt()
    }
}

fn sample_index<R: Rng>(weights: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

/// Runs `replicas` chains of length `t` started from `pi` and returns the spread
/// of their ergodic averages. Replica `r` draws from stream `(seed, r)`.
pub fn replicated_variance(
    q: &GeneratorMatrix,
    pi: &ProbabilityMeasure,
    f: &Observable,
    t: f64,
    replicas: usize,
    seed: u64,
) -> Result<VarianceEstimate> {
    check_len(q.n(), pi.len())?;
    check_len(q.n(), f.len())?;
    if replicas < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 replicas, got {replicas}")));
    }
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::InvalidInput(format!("t must be positive, got {t}")));
    }
    let table = JumpTable::new(q)?;
    let averages: Vec<f64> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = replica_rng(seed, r as u64);
            let x0 = sample_index(pi.weights(), &mut rng);
            let mut acc = 0.0;
            table.run(x0, t, &mut rng, |x, h| acc += f[x] * h);
            acc / t
        })
        .collect();
    Ok(VarianceEstimate::from_averages(&averages, t))
}
