//! Euler-Maruyama simulation of overdamped Langevin dynamics on a torus.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::fields::{mat_vec, IrreversibleDrift, MobilitySpec, Point, PotentialSpec};
use crate::chain::{replica_rng, VarianceEstimate};
use crate::error::{Error, Result};

/// Nodes per axis of the lattice used by the step-size guard and the Gibbs sampler.
pub const GUARD_NODES: usize = 64;

/// `-Sigma grad U + T div Sigma + C`; the identity mobility takes the plain `-grad U` path.
pub fn drift_at(x: &Point, pot: &PotentialSpec, mob: &MobilitySpec, irr: Option<&IrreversibleDrift>) -> Point {
    let g = pot.grad(x);
    let mut d = if mob.is_identity() {
        [-g[0], -g[1]]
    } else {
        let sg = mat_vec(&mob.big_sigma(x), &g);
        let div = mob.div_big_sigma(x);
        let t = pot.temperature();
        [-sg[0] + t * div[0], -sg[1] + t * div[1]]
    };
    if let Some(c) = irr {
        let c = c.c(x);
        d[0] += c[0];
        d[1] += c[1];
    }
    if pot.domain().dim() == 1 {
        d[1] = 0.0;
    }
    d
}

/// Sampled path; `points[0]` is the initial point and there are `n_steps + 1` points.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub dim: usize,
    pub dt: f64,
    pub seed: u64,
    pub points: Vec<Point>,
}

impl Path {
    pub fn n_steps(&self) -> usize {
        self.points.len().saturating_sub(1)
    }
}

/// One simulation setup shared by the single-path and replicated samplers.
struct Stepper<'a> {
    pot: &'a PotentialSpec,
    mob: &'a MobilitySpec,
    irr: Option<&'a IrreversibleDrift>,
    dt: f64,
    noise: f64,
}

impl<'a> Stepper<'a> {
    fn new(pot: &'a PotentialSpec, mob: &'a MobilitySpec, irr: Option<&'a IrreversibleDrift>, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
        }
        let d = pot.domain();
        let max_drift = d
            .lattice(GUARD_NODES)
            .iter()
            .map(|x| {
                let v = drift_at(x, pot, mob, irr);
                (v[0] * v[0] + v[1] * v[1]).sqrt()
            })
            .fold(0.0, f64::max);
        let excursion = dt * max_drift;
        let limit = d.min_period() / 10.0;
        if !(excursion < limit) {
            return Err(Error::UnstableStep { excursion, limit });
        }
        Ok(Self { pot, mob, irr, dt, noise: (2.0 * pot.temperature() * dt).sqrt() })
    }

    fn step(&self, x: &mut Point, rng: &mut ChaCha8Rng) {
        let dim = self.pot.domain().dim();
        let drift = drift_at(x, self.pot, self.mob, self.irr);
        let mut xi = [0.0; 2];
        for v in xi.iter_mut().take(dim) {
            *v = rng.sample(StandardNormal);
        }
        let kick = if self.mob.is_identity() { xi } else { mat_vec(&self.mob.sigma(x), &xi) };
        for a in 0..dim {
            x[a] += drift[a] * self.dt + self.noise * kick[a];
        }
        self.pot.domain().wrap(x);
    }
}

/// `x_{k+1} = wrap(x_k + b(x_k) dt + sqrt(2 T dt) sigma(x_k) xi_k)`.
#[allow(clippy::too_many_arguments)]
pub fn euler_maruyama(
    pot: &PotentialSpec,
    mob: &MobilitySpec,
    irr: Option<&IrreversibleDrift>,
    x0: Point,
    dt: f64,
    n_steps: usize,
    seed: u64,
) -> Result<Path> {
    let stepper = Stepper::new(pot, mob, irr, dt)?;
    let mut rng = replica_rng(seed, 0);
    let mut x = x0;
    pot.domain().wrap(&mut x);
    let mut points = Vec::with_capacity(n_steps + 1);
    points.push(x);
    for _ in 0..n_steps {
        stepper.step(&mut x, &mut rng);
        points.push(x);
    }
    Ok(Path { dim: pot.domain().dim(), dt, seed, points })
}

/// Left-endpoint Riemann sum of `f` over the path divided by the total time.
/// A single-point path has zero duration and returns `f(x_0)`.
pub fn ergodic_average_path(path: &Path, f: &dyn Fn(&Point) -> f64, dt: f64) -> Result<f64> {
    if path.points.is_empty() {
        return Err(Error::EmptyPath);
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
    }
    let n = path.points.len();
    if n == 1 {
        return Ok(f(&path.points[0]));
    }
    let s: f64 = path.points[..n - 1].iter().map(|x| f(x) * dt).sum();
    Ok(s / ((n - 1) as f64 * dt))
}

/// Draws from `exp(-U/T)` by rejection against the maximum of the density on a lattice,
/// with a small safety margin for off-lattice peaks.
pub fn sample_gibbs(pot: &PotentialSpec, rng: &mut ChaCha8Rng) -> Point {
    let d = pot.domain();
    let t = pot.temperature();
    let lattice = d.lattice(GUARD_NODES);
    let umin = lattice.iter().map(|x| pot.u(x)).fold(f64::INFINITY, f64::min);
    let h = d.min_period() / GUARD_NODES as f64;
    let gmax = lattice
        .iter()
        .map(|x| {
            let g = pot.grad(x);
            (g[0] * g[0] + g[1] * g[1]).sqrt()
        })
        .fold(0.0, f64::max);
    let bound = umin - gmax * h;
    loop {
        let mut x = [0.0; 2];
        for a in 0..d.dim() {
            x[a] = rng.random::<f64>() * d.period(a);
        }
        let accept = (-(pot.u(&x) - bound) / t).exp();
        if rng.random::<f64>() < accept {
            return x;
        }
    }
}

/// Replicated ergodic averages of `f` over horizon `t`; replica `r` uses stream `(seed, r)`
/// and starts from a Gibbs draw. Paths are not stored.
#[allow(clippy::too_many_arguments)]
pub fn replicated_variance_sde(
    pot: &PotentialSpec,
    mob: &MobilitySpec,
    irr: Option<&IrreversibleDrift>,
    f: &(dyn Fn(&Point) -> f64 + Sync),
    t: f64,
    dt: f64,
    replicas: usize,
    seed: u64,
) -> Result<VarianceEstimate> {
    if replicas < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 replicas, got {replicas}")));
    }
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::InvalidInput(format!("t must be positive, got {t}")));
    }
    let stepper = Stepper::new(pot, mob, irr, dt)?;
    let n_steps = ((t / dt).round() as usize).max(1);
    let horizon = n_steps as f64 * dt;
    let averages: Vec<f64> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = replica_rng(seed, r as u64);
            let mut x = sample_gibbs(pot, &mut rng);
            let mut acc = 0.0;
            for _ in 0..n_steps {
                acc += f(&x);
                stepper.step(&mut x, &mut rng);
            }
            acc / n_steps as f64
        })
        .collect();
    Ok(VarianceEstimate::from_averages(&averages, horizon))
}
