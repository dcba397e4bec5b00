//! Potentials, mobility fields and irreversible drifts on flat 1D/2D tori.
//!
//! Points are stored as `[f64; 2]`; on a 1D torus the second coordinate is
//! ignored and kept at zero. Fields carry analytic derivatives which are checked
//! against centered finite differences by the `validate` methods.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

pub type Point = [f64; 2];
pub type Mat2 = [[f64; 2]; 2];

pub type ScalarField = Arc<dyn Fn(&Point) -> f64 + Send + Sync>;
pub type VectorField = Arc<dyn Fn(&Point) -> Point + Send + Sync>;
pub type MatrixField = Arc<dyn Fn(&Point) -> Mat2 + Send + Sync>;

pub const IDENTITY: Mat2 = [[1.0, 0.0], [0.0, 1.0]];

pub fn mat_vec(m: &Mat2, v: &Point) -> Point {
    [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
}

pub fn dot(a: &Point, b: &Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

pub fn quad_form(m: &Mat2, v: &Point) -> f64 {
    dot(v, &mat_vec(m, v))
}

fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

fn transpose(a: &Mat2) -> Mat2 {
    [[a[0][0], a[1][0]], [a[0][1], a[1][1]]]
}

/// Eigenvalues of the symmetric part of `m`, restricted to the leading `dim` block.
pub fn sym_eigenvalues(m: &Mat2, dim: usize) -> (f64, f64) {
    if dim == 1 {
        return (m[0][0], m[0][0]);
    }
    let a = m[0][0];
    let d = m[1][1];
    let b = 0.5 * (m[0][1] + m[1][0]);
    let mean = 0.5 * (a + d);
    let r = (0.25 * (a - d).powi(2) + b * b).sqrt();
    (mean - r, mean + r)
}

/// Flat torus `[0, L_1) x [0, L_2)` in one or two dimensions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TorusDomain {
    dim: usize,
    period: [f64; 2],
}

impl TorusDomain {
    pub fn new(dim: usize, period: &[f64]) -> Result<Self> {
        if !(dim == 1 || dim == 2) {
            return Err(Error::InvalidInput(format!("torus dimension must be 1 or 2, got {dim}")));
        }
        if period.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: period.len() });
        }
        if period.iter().any(|p| !(*p > 0.0) || !p.is_finite()) {
            return Err(Error::InvalidInput("periods must be positive".into()));
        }
        let mut p = [1.0; 2];
        p[..dim].copy_from_slice(period);
        Ok(Self { dim, period: p })
    }

    /// `[0, 2 pi)^dim`.
    pub fn standard(dim: usize) -> Result<Self> {
        Self::new(dim, &vec![2.0 * PI; dim])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn period(&self, axis: usize) -> f64 {
        self.period[axis]
    }

    pub fn volume(&self) -> f64 {
        self.period[..self.dim].iter().product()
    }

    pub fn min_period(&self) -> f64 {
        self.period[..self.dim].iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn wrap(&self, x: &mut Point) {
        for a in 0..self.dim {
            x[a] = x[a].rem_euclid(self.period[a]);
        }
        if self.dim == 1 {
            x[1] = 0.0;
        }
    }

    /// Nodes `x = (i + offset) L / n` of a uniform validation lattice.
    pub(crate) fn lattice(&self, n: usize) -> Vec<Point> {
        let h0 = self.period[0] / n as f64;
        let h1 = self.period[1] / n as f64;
        if self.dim == 1 {
            (0..n).map(|i| [i as f64 * h0, 0.0]).collect()
        } else {
            (0..n * n).map(|k| [(k % n) as f64 * h0, (k / n) as f64 * h1]).collect()
        }
    }

    fn step(&self, x: &Point, axis: usize, h: f64) -> Point {
        let mut y = *x;
        y[axis] += h;
        y
    }
}

/// Default node count per axis for field validation.
pub const VALIDATION_NODES: usize = 128;

fn fd_tolerance(h: f64, scale: f64) -> f64 {
    4.0 * h * h * (1.0 + scale)
}

/// Potential `U` with analytic gradient at temperature `T`; target density `exp(-U/T) / Z`.
#[derive(Clone)]
pub struct PotentialSpec {
    domain: TorusDomain,
    u: ScalarField,
    grad_u: VectorField,
    temperature: f64,
}

impl fmt::Debug for PotentialSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PotentialSpec")
            .field("domain", &self.domain)
            .field("temperature", &self.temperature)
            .finish_non_exhaustive()
    }
}

impl PotentialSpec {
    pub fn new(domain: TorusDomain, u: ScalarField, grad_u: VectorField, temperature: f64) -> Result<Self> {
        if !(temperature > 0.0) || !temperature.is_finite() {
            return Err(Error::InvalidInput(format!("temperature must be positive, got {temperature}")));
        }
        Ok(Self { domain, u, grad_u, temperature })
    }

    /// `U(x) = cos x` on `[0, 2 pi)`.
    pub fn cosine_1d(temperature: f64) -> Result<Self> {
        Self::new(
            TorusDomain::standard(1)?,
            Arc::new(|x: &Point| x[0].cos()),
            Arc::new(|x: &Point| [-x[0].sin(), 0.0]),
            temperature,
        )
    }

    /// `U(x) = cos x1 + cos x2` on `[0, 2 pi)^2`.
    pub fn cosine_2d(temperature: f64) -> Result<Self> {
        Self::new(
            TorusDomain::standard(2)?,
            Arc::new(|x: &Point| x[0].cos() + x[1].cos()),
            Arc::new(|x: &Point| [-x[0].sin(), -x[1].sin()]),
            temperature,
        )
    }

    /// `U(x) = cos 2x1 + 0.3 sin x1 + cos x2`: two unequal wells along `x1`.
    pub fn two_well_2d(temperature: f64) -> Result<Self> {
        Self::new(
            TorusDomain::standard(2)?,
            Arc::new(|x: &Point| (2.0 * x[0]).cos() + 0.3 * x[0].sin() + x[1].cos()),
            Arc::new(|x: &Point| [-2.0 * (2.0 * x[0]).sin() + 0.3 * x[0].cos(), -x[1].sin()]),
            temperature,
        )
    }

    /// Same potential at a different temperature.
    pub fn with_temperature(&self, temperature: f64) -> Result<Self> {
        Self::new(self.domain, self.u.clone(), self.grad_u.clone(), temperature)
    }

    pub fn domain(&self) -> &TorusDomain {
        &self.domain
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn u(&self, x: &Point) -> f64 {
        (self.u)(x)
    }

    pub fn grad(&self, x: &Point) -> Point {
        let mut g = (self.grad_u)(x);
        if self.domain.dim == 1 {
            g[1] = 0.0;
        }
        g
    }

    /// Checks periodicity and that `grad_u` matches centered differences of `u` to `O(h^2)`.
    pub fn validate(&self, nodes: usize) -> Result<()> {
        let d = &self.domain;
        let scale = d.lattice(nodes).iter().map(|x| self.u(x).abs()).fold(0.0, f64::max);
        for x in d.lattice(nodes) {
            for a in 0..d.dim {
                let h = d.period(a) / nodes as f64;
                let shifted = d.step(&x, a, d.period(a));
                if (self.u(&shifted) - self.u(&x)).abs() > 1e-9 * (1.0 + scale) {
                    return Err(Error::FieldValidation(format!("U is not periodic along axis {a} at {x:?}")));
                }
                let fd = (self.u(&d.step(&x, a, h)) - self.u(&d.step(&x, a, -h))) / (2.0 * h);
                let err = (fd - self.grad(&x)[a]).abs();
                if err > fd_tolerance(h, scale) {
                    return Err(Error::FieldValidation(format!(
                        "grad U mismatch {err:e} along axis {a} at {x:?}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Mobility `Sigma(x) = sigma(x) sigma(x)^T` with its row divergence `sum_j d_j Sigma_ij`.
#[derive(Clone)]
pub struct MobilitySpec {
    sigma: MatrixField,
    big_sigma: MatrixField,
    div_big_sigma: VectorField,
    identity: bool,
    peskun: bool,
}

impl fmt::Debug for MobilitySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MobilitySpec")
            .field("identity", &self.identity)
            .field("peskun", &self.peskun)
            .finish_non_exhaustive()
    }
}

impl MobilitySpec {
    /// General constructor. `peskun` flags a spec that must dominate the identity.
    pub fn new(sigma: MatrixField, big_sigma: MatrixField, div_big_sigma: VectorField, peskun: bool) -> Self {
        Self { sigma, big_sigma, div_big_sigma, identity: false, peskun }
    }

    /// `Sigma = I`: the unperturbed overdamped Langevin dynamics.
    pub fn identity() -> Self {
        Self {
            sigma: Arc::new(|_| IDENTITY),
            big_sigma: Arc::new(|_| IDENTITY),
            div_big_sigma: Arc::new(|_| [0.0, 0.0]),
            identity: true,
            peskun: true,
        }
    }

    /// `Sigma = c I` for a constant `c > 0`.
    pub fn constant(c: f64) -> Result<Self> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::InvalidInput(format!("mobility constant must be positive, got {c}")));
        }
        let s = c.sqrt();
        Ok(Self {
            sigma: Arc::new(move |_| [[s, 0.0], [0.0, s]]),
            big_sigma: Arc::new(move |_| [[c, 0.0], [0.0, c]]),
            div_big_sigma: Arc::new(|_| [0.0, 0.0]),
            identity: false,
            peskun: c >= 1.0,
        })
    }

    /// Isotropic `Sigma(x) = s(x) I` with `div Sigma = grad s`.
    pub fn scalar(s: ScalarField, grad_s: VectorField, peskun: bool) -> Self {
        let s1 = s.clone();
        Self {
            sigma: Arc::new(move |x| {
                let r = s1(x).max(0.0).sqrt();
                [[r, 0.0], [0.0, r]]
            }),
            big_sigma: Arc::new(move |x| {
                let v = s(x);
                [[v, 0.0], [0.0, v]]
            }),
            div_big_sigma: grad_s,
            identity: false,
            peskun,
        }
    }

    /// `Sigma(x) = (1 + amp sin^2 x1) I`.
    pub fn sin_squared(amp: f64) -> Self {
        Self::scalar(
            Arc::new(move |x| 1.0 + amp * x[0].sin().powi(2)),
            Arc::new(move |x| [2.0 * amp * x[0].sin() * x[0].cos(), 0.0]),
            amp >= 0.0,
        )
    }

    /// `sigma = I + A(x)`, `Sigma = I + A + A^T + A A^T`; the divergence of `Sigma` is supplied.
    pub fn from_sqrt(a: MatrixField, div_big_sigma: VectorField, peskun: bool) -> Self {
        let a1 = a.clone();
        Self {
            sigma: Arc::new(move |x| {
                let m = a1(x);
                [[1.0 + m[0][0], m[0][1]], [m[1][0], 1.0 + m[1][1]]]
            }),
            big_sigma: Arc::new(move |x| {
                let m = a(x);
                let s = [[1.0 + m[0][0], m[0][1]], [m[1][0], 1.0 + m[1][1]]];
                mat_mul(&s, &transpose(&s))
            }),
            div_big_sigma,
            identity: false,
            peskun,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.identity
    }

    pub fn is_peskun(&self) -> bool {
        self.peskun
    }

    pub fn sigma(&self, x: &Point) -> Mat2 {
        (self.sigma)(x)
    }

    pub fn big_sigma(&self, x: &Point) -> Mat2 {
        (self.big_sigma)(x)
    }

    pub fn div_big_sigma(&self, x: &Point) -> Point {
        (self.div_big_sigma)(x)
    }

    /// Checks positive definiteness, `Sigma = sigma sigma^T`, the divergence against finite
    /// differences, and `Sigma - I >= 0` when flagged as a Peskun-type mobility.
    pub fn validate(&self, domain: &TorusDomain, nodes: usize) -> Result<()> {
        let dim = domain.dim();
        let lattice = domain.lattice(nodes);
        let scale = lattice
            .iter()
            .map(|x| self.big_sigma(x).iter().flatten().fold(0.0_f64, |a, v| a.max(v.abs())))
            .fold(0.0, f64::max);
        for (node, x) in lattice.iter().enumerate() {
            let big = self.big_sigma(x);
            let (lo, _) = sym_eigenvalues(&big, dim);
            if !(lo > 0.0) {
                return Err(Error::FieldValidation(format!("Sigma is not positive definite at {x:?}")));
            }
            if dim == 2 && (big[0][1] - big[1][0]).abs() > 1e-12 * (1.0 + scale) {
                return Err(Error::FieldValidation(format!("Sigma is not symmetric at {x:?}")));
            }
            let s = self.sigma(x);
            let sst = mat_mul(&s, &transpose(&s));
            for i in 0..dim {
                for j in 0..dim {
                    if (sst[i][j] - big[i][j]).abs() > 1e-10 * (1.0 + scale) {
                        return Err(Error::FieldValidation(format!("sigma sigma^T != Sigma at {x:?}")));
                    }
                }
            }
            if self.peskun {
                let mut diff = big;
                diff[0][0] -= 1.0;
                diff[1][1] -= 1.0;
                let (lo, _) = sym_eigenvalues(&diff, dim);
                if lo < -1e-12 {
                    return Err(Error::NotDominating { node, min_eig: lo });
                }
            }
            let div = self.div_big_sigma(x);
            for i in 0..dim {
                let mut fd = 0.0;
                for j in 0..dim {
                    let h = domain.period(j) / nodes as f64;
                    let plus = self.big_sigma(&domain.step(x, j, h));
                    let minus = self.big_sigma(&domain.step(x, j, -h));
                    fd += (plus[i][j] - minus[i][j]) / (2.0 * h);
                }
                let h = domain.period(i) / nodes as f64;
                let err = (fd - div[i]).abs();
                if err > fd_tolerance(h, scale) {
                    return Err(Error::FieldValidation(format!("div Sigma mismatch {err:e} at {x:?}")));
                }
            }
        }
        Ok(())
    }
}

/// Drift `C(x)` that leaves `exp(-U/T)` invariant.
#[derive(Clone)]
pub struct IrreversibleDrift {
    c: VectorField,
}

impl fmt::Debug for IrreversibleDrift {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("IrreversibleDrift").finish_non_exhaustive()
    }
}

impl IrreversibleDrift {
    pub fn new(c: VectorField) -> Self {
        Self { c }
    }

    pub fn c(&self, x: &Point) -> Point {
        (self.c)(x)
    }

    /// Max-norm of the centered-difference divergence of `C exp(-U/T)` over the lattice,
    /// relative to the `O(h^2)` tolerance; returns the raw maximum.
    pub fn weighted_divergence(&self, pot: &PotentialSpec, nodes: usize) -> f64 {
        let d = pot.domain();
        let t = pot.temperature();
        let flux = |x: &Point, a: usize| self.c(x)[a] * (-pot.u(x) / t).exp();
        d.lattice(nodes)
            .iter()
            .map(|x| {
                (0..d.dim())
                    .map(|a| {
                        let h = d.period(a) / nodes as f64;
                        (flux(&d.step(x, a, h), a) - flux(&d.step(x, a, -h), a)) / (2.0 * h)
                    })
                    .sum::<f64>()
                    .abs()
            })
            .fold(0.0, f64::max)
    }

    /// Checks `div(C exp(-U/T)) = 0` to `O(h^2)` on the validation lattice.
    pub fn validate(&self, pot: &PotentialSpec, nodes: usize) -> Result<()> {
        let d = pot.domain();
        let t = pot.temperature();
        let lattice = d.lattice(nodes);
        let scale = lattice
            .iter()
            .map(|x| {
                let c = self.c(x);
                (c[0].abs() + c[1].abs()) * (-pot.u(x) / t).exp()
            })
            .fold(0.0, f64::max);
        let h = d.min_period() / nodes as f64;
        let div = self.weighted_divergence(pot, nodes);
        if div > fd_tolerance(h, scale) * (1.0 + 1.0 / t).powi(3) {
            return Err(Error::FieldValidation(format!("div(C exp(-U/T)) = {div:e} is not O(h^2)")));
        }
        Ok(())
    }
}

/// `C(x) = J grad U(x)` for a constant antisymmetric `J`: divergence free and orthogonal to `grad U`.
pub fn solenoidal_drift(pot: &PotentialSpec, j: Mat2) -> Result<IrreversibleDrift> {
    if pot.domain().dim() < 2 {
        return Err(Error::InvalidInput("solenoidal drift needs a torus of dimension >= 2".into()));
    }
    let scale = j.iter().flatten().fold(0.0_f64, |a, v| a.max(v.abs()));
    for a in 0..2 {
        for b in 0..2 {
            if (j[a][b] + j[b][a]).abs() > 1e-14 * (1.0 + scale) {
                return Err(Error::NotAntisymmetric);
            }
        }
    }
    let p = pot.clone();
    Ok(IrreversibleDrift::new(Arc::new(move |x| mat_vec(&j, &p.grad(x)))))
}

/// `J = delta [[0, 1], [-1, 0]]`.
pub fn rotation(delta: f64) -> Mat2 {
    [[0.0, delta], [-delta, 0.0]]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_potentials_validate() {
        PotentialSpec::cosine_1d(1.0).unwrap().validate(VALIDATION_NODES).unwrap();
        PotentialSpec::cosine_2d(0.5).unwrap().validate(64).unwrap();
        PotentialSpec::two_well_2d(1.0).unwrap().validate(64).unwrap();
    }

    #[test]
    fn wrong_gradient_is_caught() {
        let bad = PotentialSpec::new(
            TorusDomain::standard(1).unwrap(),
            Arc::new(|x: &Point| x[0].cos()),
            Arc::new(|x: &Point| [x[0].sin(), 0.0]),
            1.0,
        )
        .unwrap();
        assert!(matches!(bad.validate(64), Err(Error::FieldValidation(_))));
        assert!(PotentialSpec::cosine_1d(0.0).is_err());
    }

    #[test]
    fn mobilities_validate() {
        let d2 = TorusDomain::standard(2).unwrap();
        MobilitySpec::identity().validate(&d2, 32).unwrap();
        MobilitySpec::constant(2.0).unwrap().validate(&d2, 32).unwrap();
        MobilitySpec::sin_squared(0.5).validate(&d2, 64).unwrap();
        let shrink = MobilitySpec::constant(0.5).unwrap();
        assert!(!shrink.is_peskun());
        let forced = MobilitySpec::new(
            Arc::new(|_| [[0.5_f64.sqrt(), 0.0], [0.0, 0.5_f64.sqrt()]]),
            Arc::new(|_| [[0.5, 0.0], [0.0, 0.5]]),
            Arc::new(|_| [0.0, 0.0]),
            true,
        );
        assert!(matches!(forced.validate(&d2, 16), Err(Error::NotDominating { .. })));
    }

    #[test]
    fn sqrt_construction_dominates_identity() {
        // A + A^T >= 0 implies Sigma - I = A + A^T + A A^T >= 0
        let a: MatrixField = Arc::new(|x: &Point| {
            let s = 0.3 * (1.0 + x[0].sin());
            let w = 0.2 * x[1].cos();
            [[s, w], [-w, s]]
        });
        let div: VectorField = Arc::new(|x: &Point| {
            // Sigma = (1 + s)^2 I + w^2 I for this A
            let s = 0.3 * (1.0 + x[0].sin());
            let ds = 0.3 * x[0].cos();
            let w = 0.2 * x[1].cos();
            let dw = -0.2 * x[1].sin();
            [2.0 * (1.0 + s) * ds, 2.0 * w * dw]
        });
        let m = MobilitySpec::from_sqrt(a, div, true);
        let d2 = TorusDomain::standard(2).unwrap();
        m.validate(&d2, 64).unwrap();
        for x in d2.lattice(32) {
            let mut diff = m.big_sigma(&x);
            diff[0][0] -= 1.0;
            diff[1][1] -= 1.0;
            assert!(sym_eigenvalues(&diff, 2).0 >= -1e-14);
        }
    }

    #[test]
    fn solenoidal_drift_examples() {
        let pot = PotentialSpec::cosine_2d(1.0).unwrap();
        let zero = solenoidal_drift(&pot, [[0.0; 2]; 2]).unwrap();
        assert_eq!(zero.c(&[0.3, 1.2]), [0.0, 0.0]);

        let delta = 0.7;
        let c = solenoidal_drift(&pot, rotation(delta)).unwrap();
        for x in pot.domain().lattice(16) {
            let v = c.c(&x);
            assert!((v[0] - delta * -x[1].sin()).abs() < 1e-15);
            assert!((v[1] - delta * x[0].sin()).abs() < 1e-15);
            assert!(dot(&v, &pot.grad(&x)).abs() < 1e-15);
        }
        c.validate(&pot, 64).unwrap();

        assert_eq!(solenoidal_drift(&pot, [[0.0, 1.0], [1.0, 0.0]]).unwrap_err(), Error::NotAntisymmetric);
        assert!(solenoidal_drift(&PotentialSpec::cosine_1d(1.0).unwrap(), [[0.0; 2]; 2]).is_err());
    }

    #[test]
    fn non_invariant_drift_is_rejected() {
        let pot = PotentialSpec::cosine_2d(1.0).unwrap();
        let c = IrreversibleDrift::new(Arc::new(|x: &Point| [x[0].sin(), 0.0]));
        assert!(c.validate(&pot, 64).is_err());
    }

    #[test]
    fn wrap_keeps_points_on_torus() {
        let d = TorusDomain::standard(2).unwrap();
        let mut x = [-0.5, 7.0];
        d.wrap(&mut x);
        assert!((x[0] - (2.0 * PI - 0.5)).abs() < 1e-15);
        assert!((x[1] - (7.0 - 2.0 * PI)).abs() < 1e-15);
    }
}
