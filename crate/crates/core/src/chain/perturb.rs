//! Peskun-type (reversible) and cycle (irreversible) perturbations of a
//! reversible chain, and the Glauber/Metropolis base dynamics.

use nalgebra::DMatrix;

use super::generator::{check_len, GeneratorMatrix, Perturbation, ProbabilityMeasure};
use crate::error::{Error, Result};

/// Rate increment `epsilon` from `i` to `j`, balanced by `delta = pi(i) epsilon / pi(j)` back.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeskunPair {
    pub i: usize,
    pub j: usize,
    pub epsilon: f64,
}

impl PeskunPair {
    pub fn new(i: usize, j: usize, epsilon: f64) -> Result<Self> {
        if i == j {
            return Err(Error::InvalidInput(format!("Peskun pair needs distinct states, got ({i}, {i})")));
        }
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidInput(format!("epsilon must be finite and >= 0, got {epsilon}")));
        }
        Ok(Self { i, j, epsilon })
    }
}

/// Directed cycle through distinct states carrying a probability flux `epsilon`.
#[derive(Debug, Clone, PartialEq)]
pub struct CyclePerturbation {
    states: Vec<usize>,
    epsilon: f64,
}

impl CyclePerturbation {
    pub fn new(states: Vec<usize>, epsilon: f64) -> Result<Self> {
        if states.len() < 3 {
            return Err(Error::CycleTooShort(states.len()));
        }
        for (a, s) in states.iter().enumerate() {
            if states[..a].contains(s) {
                return Err(Error::InvalidInput(format!("cycle visits state {s} twice")));
            }
        }
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidInput(format!("epsilon must be finite and >= 0, got {epsilon}")));
        }
        Ok(Self { states, epsilon })
    }

    pub fn states(&self) -> &[usize] {
        &self.states
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        Self::new(self.states.clone(), epsilon)
    }

    fn check_range(&self, n: usize) -> Result<()> {
        match self.states.iter().find(|&&s| s >= n) {
            Some(&index) => Err(Error::IndexOutOfRange { index, n }),
            None => Ok(()),
        }
    }

    /// Consecutive `(from, to)` pairs including the closing edge.
    fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let k = self.states.len();
        (0..k).map(move |m| (self.states[m], self.states[(m + 1) % k]))
    }
}

/// Dimensionless energies `H(i)`; the target is `pi(i) ∝ exp(-H(i))`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyFunction(Vec<f64>);

impl EnergyFunction {
    pub fn new(h: Vec<f64>) -> Result<Self> {
        if h.len() < 2 {
            return Err(Error::InvalidInput("need at least 2 states".into()));
        }
        if h.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("energies must be finite".into()));
        }
        Ok(Self(h))
    }

    pub fn n(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn gibbs(&self) -> ProbabilityMeasure {
        ProbabilityMeasure::gibbs(&self.0).expect("finite energies give a valid Gibbs measure")
    }
}

/// Every unordered pair of distinct states.
pub fn complete_graph(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect()
}

pub fn peskun_perturbation(pair: &PeskunPair, pi: &ProbabilityMeasure) -> Result<Perturbation> {
    let n = pi.len();
    for index in [pair.i, pair.j] {
        if index >= n {
            return Err(Error::IndexOutOfRange { index, n });
        }
    }
    let (i, j, eps) = (pair.i, pair.j, pair.epsilon);
    let delta = pi[i] * eps / pi[j];
    let mut s = DMatrix::zeros(n, n);
    s[(i, j)] = eps;
    s[(i, i)] = -eps;
    s[(j, i)] = delta;
    s[(j, j)] = -delta;
    Perturbation::new(s)
}

/// `A(i,j) = Gamma(i,j) / pi(i)` where `Gamma` carries `+epsilon` along the cycle
/// and `-epsilon` against it.
pub fn cycle_perturbation(cyc: &CyclePerturbation, pi: &ProbabilityMeasure) -> Result<Perturbation> {
    let n = pi.len();
    cyc.check_range(n)?;
    let mut gamma = DMatrix::zeros(n, n);
    for (a, b) in cyc.edges() {
        gamma[(a, b)] += cyc.epsilon;
        gamma[(b, a)] -= cyc.epsilon;
    }
    for i in 0..n {
        let w = pi[i];
        gamma.row_mut(i).iter_mut().for_each(|v| *v /= w);
    }
    Perturbation::new(gamma)
}

/// Largest `eps >= 0` keeping every off-diagonal of `q0 + eps * template` nonnegative.
/// Returns `f64::INFINITY` when the template has no negative off-diagonal entry.
pub fn max_admissible_epsilon(q0: &GeneratorMatrix, template: &Perturbation) -> Result<f64> {
    check_len(q0.n(), template.n())?;
    let n = q0.n();
    let t = template.matrix();
    let mut best = f64::INFINITY;
    for i in 0..n {
        for j in 0..n {
            if i != j && t[(i, j)] < 0.0 {
                best = best.min(q0.rate(i, j) / -t[(i, j)]);
            }
        }
    }
    Ok(best)
}

fn edge_generator(h: &EnergyFunction, edges: Option<&[(usize, usize)]>, rate: impl Fn(f64, f64) -> f64) -> Result<GeneratorMatrix> {
    let n = h.n();
    let owned;
    let edges = match edges {
        Some(e) => e,
        None => {
            owned = complete_graph(n);
            &owned
        }
    };
    let hv = h.values();
    let mut q = DMatrix::zeros(n, n);
    for &(i, j) in edges {
        for index in [i, j] {
            if index >= n {
                return Err(Error::IndexOutOfRange { index, n });
            }
        }
        if i == j {
            return Err(Error::InvalidInput(format!("self-loop edge ({i}, {i})")));
        }
        q[(i, j)] = rate(hv[i], hv[j]);
        q[(j, i)] = rate(hv[j], hv[i]);
    }
    GeneratorMatrix::from_rates(q)
}

/// Glauber rates `exp(H(i)) / (exp(H(i)) + exp(H(j)))` on the given edges
/// (complete graph when `edges` is `None`).
pub fn glauber_generator(h: &EnergyFunction, edges: Option<&[(usize, usize)]>) -> Result<GeneratorMatrix> {
    edge_generator(h, edges, |hi, hj| 1.0 / (1.0 + (hj - hi).exp()))
}

/// Metropolis rates `exp(H(i)) min(exp(-H(i)), exp(-H(j)))`.
pub fn metropolis_generator(h: &EnergyFunction, edges: Option<&[(usize, usize)]>) -> Result<GeneratorMatrix> {
    edge_generator(h, edges, |hi, hj| (hi - hj).exp().min(1.0))
}

fn three_cycle(h: &EnergyFunction, cyc: &CyclePerturbation, weight: impl Fn(usize, &[usize]) -> f64) -> Result<Perturbation> {
    let k = cyc.states().len();
    if k != 3 {
        return Err(Error::InvalidInput(format!(
            "energy-based cycle perturbation needs exactly 3 states, got {k}; use cycle_perturbation"
        )));
    }
    let n = h.n();
    cyc.check_range(n)?;
    let mut a = DMatrix::zeros(n, n);
    for (from, to) in cyc.edges() {
        a[(from, to)] += cyc.epsilon() * weight(from, cyc.states());
        a[(to, from)] -= cyc.epsilon() * weight(to, cyc.states());
    }
    Perturbation::new(a)
}

/// Normalization-free 3-cycle perturbation adapted to Glauber dynamics:
/// row `i` entries are `±epsilon exp(H(i)) / (exp(H(i)) + exp(H(j)) + exp(H(k)))`.
pub fn glauber_cycle_perturbation(h: &EnergyFunction, cyc: &CyclePerturbation) -> Result<Perturbation> {
    let hv = h.values();
    three_cycle(h, cyc, |i, states| 1.0 / states.iter().map(|&m| (hv[m] - hv[i]).exp()).sum::<f64>())
}

/// Metropolis analogue: row `i` entries are `±epsilon exp(H(i)) min_m exp(-H(m))`.
pub fn metropolis_cycle_perturbation(h: &EnergyFunction, cyc: &CyclePerturbation) -> Result<Perturbation> {
    let hv = h.values();
    three_cycle(h, cyc, |i, states| {
        states.iter().map(|&m| (hv[i] - hv[m]).exp()).fold(f64::INFINITY, f64::min)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::generator::is_reversible;

    fn assert_mat(m: &DMatrix<f64>, expected: &[f64], tol: f64) {
        for (a, b) in m.transpose().iter().zip(expected) {
            assert!((a - b).abs() < tol, "{m} vs {expected:?}");
        }
    }

    #[test]
    fn peskun_uniform_is_symmetric() {
        let s = peskun_perturbation(&PeskunPair::new(0, 1, 0.1).unwrap(), &ProbabilityMeasure::uniform(2)).unwrap();
        assert_mat(s.matrix(), &[-0.1, 0.1, 0.1, -0.1], 1e-15);
    }

    #[test]
    fn peskun_backward_rate_balances_flux() {
        let pi = ProbabilityMeasure::new(vec![0.75, 0.25]).unwrap();
        let s = peskun_perturbation(&PeskunPair::new(0, 1, 0.1).unwrap(), &pi).unwrap();
        assert!((s.matrix()[(1, 0)] - 0.3).abs() < 1e-15);
        assert!((s.matrix()[(1, 1)] + 0.3).abs() < 1e-15);
    }

    #[test]
    fn zero_weight_gives_zero_matrix() {
        let pi = ProbabilityMeasure::new(vec![0.5, 0.3, 0.2]).unwrap();
        assert!(peskun_perturbation(&PeskunPair::new(2, 0, 0.0).unwrap(), &pi).unwrap().is_zero());
        let c = CyclePerturbation::new(vec![0, 1, 2], 0.0).unwrap();
        assert!(cycle_perturbation(&c, &pi).unwrap().is_zero());
    }

    #[test]
    fn peskun_index_check() {
        let pair = PeskunPair::new(0, 5, 0.1).unwrap();
        assert_eq!(
            peskun_perturbation(&pair, &ProbabilityMeasure::uniform(3)),
            Err(Error::IndexOutOfRange { index: 5, n: 3 })
        );
        assert!(PeskunPair::new(1, 1, 0.1).is_err());
        assert!(PeskunPair::new(0, 1, -0.1).is_err());
    }

    #[test]
    fn uniform_three_cycle() {
        let c = CyclePerturbation::new(vec![0, 1, 2], 0.1).unwrap();
        let a = cycle_perturbation(&c, &ProbabilityMeasure::uniform(3)).unwrap();
        let e = [0.0, 0.3, -0.3, -0.3, 0.0, 0.3, 0.3, -0.3, 0.0];
        assert_mat(a.matrix(), &e, 1e-15);
    }

    #[test]
    fn short_cycles_are_rejected() {
        assert_eq!(CyclePerturbation::new(vec![0, 1], 0.1), Err(Error::CycleTooShort(2)));
        assert!(CyclePerturbation::new(vec![0, 1, 0], 0.1).is_err());
        let c = CyclePerturbation::new(vec![0, 1, 7], 0.1).unwrap();
        assert_eq!(
            cycle_perturbation(&c, &ProbabilityMeasure::uniform(3)),
            Err(Error::IndexOutOfRange { index: 7, n: 3 })
        );
    }

    #[test]
    fn admissible_epsilon_examples() {
        let q0 = glauber_generator(&EnergyFunction::new(vec![0.0; 3]).unwrap(), None).unwrap();
        // Q0 off-diagonals are 1/2; template most negative entry is -1
        let mut t = DMatrix::zeros(3, 3);
        t[(0, 1)] = 1.0;
        t[(0, 2)] = -1.0;
        t[(1, 2)] = 1.0;
        t[(1, 0)] = -1.0;
        t[(2, 0)] = 1.0;
        t[(2, 1)] = -1.0;
        let t = Perturbation::new(t).unwrap();
        let eps = max_admissible_epsilon(&q0, &t).unwrap();
        assert!((eps - 0.5).abs() < 1e-15);
        let q = q0.perturb(&t.scaled(eps)).unwrap();
        let min_off = (0..3)
            .flat_map(|i| (0..3).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| q.rate(i, j))
            .fold(f64::INFINITY, f64::min);
        assert!(min_off.abs() < 1e-12);
        assert_eq!(max_admissible_epsilon(&q0, &Perturbation::zero(3)).unwrap(), f64::INFINITY);
    }

    #[test]
    fn glauber_examples() {
        let q = glauber_generator(&EnergyFunction::new(vec![0.0; 3]).unwrap(), None).unwrap();
        assert_mat(q.matrix(), &[-1.0, 0.5, 0.5, 0.5, -1.0, 0.5, 0.5, 0.5, -1.0], 1e-15);

        let h = EnergyFunction::new(vec![0.0, 3.0_f64.ln()]).unwrap();
        let q = glauber_generator(&h, None).unwrap();
        assert!((q.rate(0, 1) - 0.25).abs() < 1e-15);
        assert!((q.rate(1, 0) - 0.75).abs() < 1e-15);
        assert!(is_reversible(&q, &h.gibbs()).unwrap());
    }

    #[test]
    fn metropolis_examples() {
        let q = metropolis_generator(&EnergyFunction::new(vec![0.0; 4]).unwrap(), None).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert_eq!(q.rate(i, j), 1.0);
                }
            }
        }
        let h = EnergyFunction::new(vec![0.0, 3.0_f64.ln()]).unwrap();
        let q = metropolis_generator(&h, None).unwrap();
        assert!((q.rate(0, 1) - 1.0 / 3.0).abs() < 1e-15);
        assert!((q.rate(1, 0) - 1.0).abs() < 1e-15);
        assert!(is_reversible(&q, &h.gibbs()).unwrap());
    }

    #[test]
    fn sparse_edges_leave_non_edges_empty() {
        let h = EnergyFunction::new(vec![0.1, -0.4, 1.2, 0.0]).unwrap();
        let q = glauber_generator(&h, Some(&[(0, 1), (1, 2), (2, 3)])).unwrap();
        assert_eq!(q.rate(0, 2), 0.0);
        assert_eq!(q.rate(3, 0), 0.0);
        assert!(q.is_irreducible());
        assert!(glauber_generator(&h, Some(&[(0, 9)])).is_err());
    }

    #[test]
    fn glauber_cycle_uniform_energy() {
        let h = EnergyFunction::new(vec![0.0; 3]).unwrap();
        let c = CyclePerturbation::new(vec![0, 1, 2], 0.3).unwrap();
        let a = glauber_cycle_perturbation(&h, &c).unwrap();
        let e = [0.0, 0.1, -0.1, -0.1, 0.0, 0.1, 0.1, -0.1, 0.0];
        assert_mat(a.matrix(), &e, 1e-15);
    }

    #[test]
    fn glauber_cycle_is_shift_invariant_and_flux_balanced() {
        let h = EnergyFunction::new(vec![0.3, -1.1, 0.7, 1.9]).unwrap();
        let shifted = EnergyFunction::new(h.values().iter().map(|v| v + 5.0).collect()).unwrap();
        let c = CyclePerturbation::new(vec![3, 0, 2], 0.2).unwrap();
        let a = glauber_cycle_perturbation(&h, &c).unwrap();
        let b = glauber_cycle_perturbation(&shifted, &c).unwrap();
        assert!((a.matrix() - b.matrix()).amax() < 1e-14);

        let pi = h.gibbs();
        let mut gamma = a.matrix().clone();
        for i in 0..4 {
            gamma.row_mut(i).iter_mut().for_each(|v| *v *= pi[i]);
        }
        assert!((&gamma + gamma.transpose()).amax() < 1e-15);
        for i in 0..4 {
            assert!(gamma.row(i).sum().abs() < 1e-15);
            assert!(gamma.column(i).sum().abs() < 1e-15);
        }
    }

    #[test]
    fn metropolis_cycle_preserves_gibbs() {
        let h = EnergyFunction::new(vec![0.3, -1.1, 0.7]).unwrap();
        let c = CyclePerturbation::new(vec![0, 1, 2], 0.2).unwrap();
        let a = metropolis_cycle_perturbation(&h, &c).unwrap();
        let pi = h.gibbs();
        for j in 0..3 {
            let col: f64 = (0..3).map(|i| pi[i] * a.matrix()[(i, j)]).sum();
            assert!(col.abs() < 1e-15);
        }
    }

    #[test]
    fn energy_cycle_requires_three_states() {
        let h = EnergyFunction::new(vec![0.0; 4]).unwrap();
        let c = CyclePerturbation::new(vec![0, 1, 2, 3], 0.1).unwrap();
        assert!(glauber_cycle_perturbation(&h, &c).is_err());
    }
}
