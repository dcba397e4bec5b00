//! Uniform periodic grids, densities and generator coefficients sampled on nodes.

use super::fields::{mat_vec, sym_eigenvalues, IrreversibleDrift, Mat2, MobilitySpec, Point, PotentialSpec, TorusDomain};
use crate::error::{Error, Result};

pub const MIN_NODES: usize = 16;

/// Nodes `x = i h` on a flat torus; node `k` has axis indices `(k % n0, k / n0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodicGrid {
    domain: TorusDomain,
    n: [usize; 2],
    h: [f64; 2],
}

impl PeriodicGrid {
    pub fn new(domain: TorusDomain, nodes: &[usize]) -> Result<Self> {
        let dim = domain.dim();
        if nodes.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: nodes.len() });
        }
        if let Some(&bad) = nodes.iter().find(|&&m| m < MIN_NODES) {
            return Err(Error::InvalidInput(format!("need at least {MIN_NODES} nodes per axis, got {bad}")));
        }
        let mut n = [1; 2];
        let mut h = [1.0; 2];
        for a in 0..dim {
            n[a] = nodes[a];
            h[a] = domain.period(a) / nodes[a] as f64;
        }
        Ok(Self { domain, n, h })
    }

    /// Same node count on every axis.
    pub fn uniform(domain: TorusDomain, nodes: usize) -> Result<Self> {
        Self::new(domain, &vec![nodes; domain.dim()])
    }

    pub fn domain(&self) -> &TorusDomain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn nodes(&self, axis: usize) -> usize {
        self.n[axis]
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.h[axis]
    }

    pub fn len(&self) -> usize {
        self.n[0] * self.n[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.h[..self.dim()].iter().product()
    }

    pub fn point(&self, k: usize) -> Point {
        let i = k % self.n[0];
        let j = k / self.n[0];
        if self.dim() == 1 {
            [i as f64 * self.h[0], 0.0]
        } else {
            [i as f64 * self.h[0], j as f64 * self.h[1]]
        }
    }

    pub fn points(&self) -> Vec<Point> {
        (0..self.len()).map(|k| self.point(k)).collect()
    }

    /// Index of the neighbour of `k` one step forward (`forward`) or backward along `axis`.
    pub fn neighbor(&self, k: usize, axis: usize, forward: bool) -> usize {
        let mut i = k % self.n[0];
        let mut j = k / self.n[0];
        let (c, m) = if axis == 0 { (&mut i, self.n[0]) } else { (&mut j, self.n[1]) };
        *c = if forward { (*c + 1) % m } else { (*c + m - 1) % m };
        i + j * self.n[0]
    }

    /// Centered-difference gradient of a nodal field at node `k`.
    pub fn gradient(&self, values: &[f64], k: usize) -> Point {
        let mut g = [0.0; 2];
        for (a, ga) in g.iter_mut().enumerate().take(self.dim()) {
            let p = values[self.neighbor(k, a, true)];
            let m = values[self.neighbor(k, a, false)];
            *ga = (p - m) / (2.0 * self.h[a]);
        }
        g
    }

    /// Quadrature `sum_k g_k h^d`.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        values.iter().sum::<f64>() * self.cell_volume()
    }

    pub fn sample(&self, f: impl Fn(&Point) -> f64) -> Vec<f64> {
        (0..self.len()).map(|k| f(&self.point(k))).collect()
    }

    pub(crate) fn check(&self, got: usize) -> Result<()> {
        if got != self.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), got });
        }
        Ok(())
    }
}

/// Strictly positive nodal density with unit mass under `sum p h^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    p: Vec<f64>,
}

impl DensityField {
    /// Validates an already normalized density.
    pub fn new(grid: &PeriodicGrid, p: Vec<f64>) -> Result<Self> {
        grid.check(p.len())?;
        if p.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidMeasure("density must be positive and finite".into()));
        }
        let mass = grid.integrate(&p);
        if (mass - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidMeasure(format!("density has mass {mass}, expected 1")));
        }
        Ok(Self { p })
    }

    /// Normalizes positive nodal weights.
    pub fn from_weights(grid: &PeriodicGrid, w: Vec<f64>) -> Result<Self> {
        grid.check(w.len())?;
        if w.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidMeasure("density weights must be positive and finite".into()));
        }
        let mass = grid.integrate(&w);
        Self::new(grid, w.into_iter().map(|v| v / mass).collect())
    }

    pub fn from_fn(grid: &PeriodicGrid, f: impl Fn(&Point) -> f64) -> Result<Self> {
        Self::from_weights(grid, grid.sample(f))
    }

    pub fn uniform(grid: &PeriodicGrid) -> Self {
        let v = 1.0 / grid.domain().volume();
        Self { p: vec![v; grid.len()] }
    }

    /// Nodal Gibbs density `exp(-U/T)` normalized on the grid.
    pub fn gibbs(grid: &PeriodicGrid, pot: &PotentialSpec) -> Result<Self> {
        let t = pot.temperature();
        let u = grid.sample(|x| pot.u(x));
        let umin = u.iter().copied().fold(f64::INFINITY, f64::min);
        Self::from_weights(grid, u.iter().map(|v| (-(v - umin) / t).exp()).collect())
    }

    /// `1 + sum_m c_m mode_m(x)` with each mode a `sin`/`cos` of an integer wave vector.
    /// Positivity is guaranteed when `sum |c_m| < 1`.
    pub fn trigonometric(grid: &PeriodicGrid, modes: &[TrigMode]) -> Result<Self> {
        let total: f64 = modes.iter().map(|m| m.amplitude.abs()).sum();
        if total >= 1.0 {
            return Err(Error::InvalidMeasure(format!("mode amplitudes sum to {total} >= 1")));
        }
        let d = *grid.domain();
        Self::from_fn(grid, |x| {
            1.0 + modes
                .iter()
                .map(|m| {
                    let mut arg = 0.0;
                    for a in 0..d.dim() {
                        arg += 2.0 * std::f64::consts::PI * m.wave[a] as f64 * x[a] / d.period(a);
                    }
                    m.amplitude * if m.cosine { arg.cos() } else { arg.sin() }
                })
                .sum::<f64>()
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.p
    }
}

/// One term of a trigonometric density perturbation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrigMode {
    pub wave: [i32; 2],
    pub amplitude: f64,
    pub cosine: bool,
}

impl TrigMode {
    pub fn sin(wave: [i32; 2], amplitude: f64) -> Self {
        Self { wave, amplitude, cosine: false }
    }

    pub fn cos(wave: [i32; 2], amplitude: f64) -> Self {
        Self { wave, amplitude, cosine: true }
    }
}

/// Nodal coefficients of `L = (1/2) div a grad + b . grad`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionCoefficients {
    a: Vec<Mat2>,
    b: Vec<Point>,
}

impl DiffusionCoefficients {
    pub fn new(grid: &PeriodicGrid, a: Vec<Mat2>, b: Vec<Point>) -> Result<Self> {
        grid.check(a.len())?;
        grid.check(b.len())?;
        let dim = grid.dim();
        for (k, m) in a.iter().enumerate() {
            let scale = m.iter().flatten().fold(0.0_f64, |s, v| s.max(v.abs()));
            if dim == 2 && (m[0][1] - m[1][0]).abs() > 1e-12 * scale {
                return Err(Error::InvalidInput(format!("a is not symmetric at node {k}")));
            }
            if !(sym_eigenvalues(m, dim).0 > 0.0) {
                return Err(Error::InvalidInput(format!("a is not positive definite at node {k}")));
            }
        }
        let mut a = a;
        let mut b = b;
        if dim == 1 {
            for m in &mut a {
                *m = [[m[0][0], 0.0], [0.0, 1.0]];
            }
            for v in &mut b {
                v[1] = 0.0;
            }
        }
        Ok(Self { a, b })
    }

    /// `a = 2 T Sigma`, `b = -Sigma grad U + T div Sigma + C`.
    pub fn from_model(
        grid: &PeriodicGrid,
        pot: &PotentialSpec,
        mob: &MobilitySpec,
        irr: Option<&IrreversibleDrift>,
    ) -> Result<Self> {
        let t = pot.temperature();
        let pts = grid.points();
        let a = pts
            .iter()
            .map(|x| {
                let s = mob.big_sigma(x);
                [[2.0 * t * s[0][0], 2.0 * t * s[0][1]], [2.0 * t * s[1][0], 2.0 * t * s[1][1]]]
            })
            .collect();
        // (1/2) div(a grad f) = T Sigma : D^2 f + T (div Sigma) . grad f, so in divergence form
        // the T div Sigma part of the Ito drift is absorbed by a and b keeps -Sigma grad U + C.
        let b = pts
            .iter()
            .map(|x| {
                let sg = mat_vec(&mob.big_sigma(x), &pot.grad(x));
                let c = irr.map(|c| c.c(x)).unwrap_or([0.0, 0.0]);
                [-sg[0] + c[0], -sg[1] + c[1]]
            })
            .collect();
        Self::new(grid, a, b)
    }

    /// `a = 2 T I`, `b = -grad U`.
    pub fn reversible(grid: &PeriodicGrid, pot: &PotentialSpec) -> Result<Self> {
        Self::from_model(grid, pot, &MobilitySpec::identity(), None)
    }

    pub fn a(&self) -> &[Mat2] {
        &self.a
    }

    pub fn b(&self) -> &[Point] {
        &self.b
    }

    pub fn is_diagonal(&self) -> bool {
        self.a.iter().all(|m| m[0][1] == 0.0 && m[1][0] == 0.0)
    }
}
