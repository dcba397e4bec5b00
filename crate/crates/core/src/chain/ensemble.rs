//! Seeded random comparison instances: a Glauber or Metropolis base chain with a
//! Peskun perturbation, a 3-cycle perturbation and a random observable.

use rand::seq::SliceRandom;
use rand::Rng;

use super::diagnostics::replica_rng;
use super::generator::{GeneratorMatrix, Observable, Perturbation, ProbabilityMeasure};
use super::perturb::{
    glauber_cycle_perturbation, glauber_generator, max_admissible_epsilon, metropolis_cycle_perturbation,
    metropolis_generator, peskun_perturbation, CyclePerturbation, EnergyFunction, PeskunPair,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BaseDynamics {
    Glauber,
    Metropolis,
}

impl BaseDynamics {
    pub fn generator(self, h: &EnergyFunction, edges: Option<&[(usize, usize)]>) -> Result<GeneratorMatrix> {
        match self {
            Self::Glauber => glauber_generator(h, edges),
            Self::Metropolis => metropolis_generator(h, edges),
        }
    }

    pub fn cycle(self, h: &EnergyFunction, cyc: &CyclePerturbation) -> Result<Perturbation> {
        match self {
            Self::Glauber => glauber_cycle_perturbation(h, cyc),
            Self::Metropolis => metropolis_cycle_perturbation(h, cyc),
        }
    }
}

/// Knobs of the random ensemble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleSpec {
    pub min_states: usize,
    pub max_states: usize,
    /// Energies are drawn uniformly from `[-energy_spread, energy_spread]`.
    pub energy_spread: f64,
    /// Probability of each non-ring edge.
    pub edge_probability: f64,
    /// Fraction of the admissible cycle weight that is used.
    pub cycle_budget: f64,
    /// Peskun weight is drawn uniformly from `(0, peskun_max]`.
    pub peskun_max: f64,
}

impl Default for EnsembleSpec {
    fn default() -> Self {
        Self {
            min_states: 3,
            max_states: 12,
            energy_spread: 2.0,
            edge_probability: 0.3,
            cycle_budget: 0.5,
            peskun_max: 1.0,
        }
    }
}

/// One randomized comparison instance.
#[derive(Debug, Clone)]
pub struct ChainInstance {
    pub seed: u64,
    pub dynamics: BaseDynamics,
    pub energy: EnergyFunction,
    pub edges: Vec<(usize, usize)>,
    pub base: GeneratorMatrix,
    pub pi: ProbabilityMeasure,
    pub peskun: Perturbation,
    pub pair: PeskunPair,
    pub cycle: Perturbation,
    pub cycle_states: Vec<usize>,
    pub cycle_epsilon: f64,
    pub observable: Observable,
}

impl ChainInstance {
    pub fn n(&self) -> usize {
        self.base.n()
    }

    /// `Q0 + S`.
    pub fn reversible(&self) -> Result<GeneratorMatrix> {
        self.base.perturb(&self.peskun)
    }

    /// `Q0 + A`.
    pub fn irreversible(&self) -> Result<GeneratorMatrix> {
        self.base.perturb(&self.cycle)
    }

    /// `Q0 + S + A`.
    pub fn combined(&self) -> Result<GeneratorMatrix> {
        self.base.perturb(&(&self.peskun + &self.cycle))
    }
}

/// Draws the instance for `seed`: ring plus random chords, a 3-cycle on a triangle that is
/// forced into the edge set, a random Peskun pair and a random observable in `[-1, 1]`.
pub fn random_instance(seed: u64, dynamics: BaseDynamics, spec: &EnsembleSpec) -> Result<ChainInstance> {
    if spec.min_states < 3 || spec.max_states < spec.min_states {
        return Err(Error::InvalidInput(format!(
            "state range [{}, {}] must start at 3 or more",
            spec.min_states, spec.max_states
        )));
    }
    if !(spec.cycle_budget >= 0.0 && spec.cycle_budget < 1.0) || !(spec.peskun_max > 0.0) {
        return Err(Error::InvalidInput("cycle budget must lie in [0, 1) and peskun_max be positive".into()));
    }
    let mut rng = replica_rng(seed, 0);
    let n = rng.random_range(spec.min_states..=spec.max_states);
    let energy = EnergyFunction::new(
        (0..n).map(|_| rng.random_range(-spec.energy_spread..=spec.energy_spread)).collect(),
    )?;
    let mut states: Vec<usize> = (0..n).collect();
    states.shuffle(&mut rng);
    let cycle_states = states[..3].to_vec();
    let mut adj = vec![vec![false; n]; n];
    let mut add = |a: usize, b: usize| {
        adj[a][b] = true;
        adj[b][a] = true;
    };
    for i in 0..n {
        add(i, (i + 1) % n);
    }
    for m in 0..3 {
        add(cycle_states[m], cycle_states[(m + 1) % 3]);
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random::<f64>() < spec.edge_probability {
                adj[i][j] = true;
            }
        }
    }
    let edges: Vec<(usize, usize)> =
        (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).filter(|&(i, j)| adj[i][j] || adj[j][i]).collect();
    let base = dynamics.generator(&energy, Some(&edges))?;
    let pi = energy.gibbs();

    let i = rng.random_range(0..n);
    let j = (i + rng.random_range(1..n)) % n;
    let eps = spec.peskun_max * (1.0 - rng.random::<f64>());
    let pair = PeskunPair::new(i, j, eps)?;
    let peskun = peskun_perturbation(&pair, &pi)?;

    let unit = dynamics.cycle(&energy, &CyclePerturbation::new(cycle_states.clone(), 1.0)?)?;
    let budget = max_admissible_epsilon(&base, &unit)?;
    let cycle_epsilon = spec.cycle_budget * budget;
    let cycle = unit.scaled(cycle_epsilon);

    let observable = Observable::new((0..n).map(|_| rng.random_range(-1.0..=1.0)).collect())?;
    Ok(ChainInstance {
        seed,
        dynamics,
        energy,
        edges,
        base,
        pi,
        peskun,
        pair,
        cycle,
        cycle_states,
        cycle_epsilon,
        observable,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::generator::{is_reversible, stationary_measure};

    #[test]
    fn instances_are_reproducible_and_valid() {
        for seed in 0..20 {
            let dynamics = if seed % 2 == 0 { BaseDynamics::Glauber } else { BaseDynamics::Metropolis };
            let a = random_instance(seed, dynamics, &EnsembleSpec::default()).unwrap();
            let b = random_instance(seed, dynamics, &EnsembleSpec::default()).unwrap();
            assert_eq!(a.base, b.base);
            assert_eq!(a.observable, b.observable);
            assert!((3..=12).contains(&a.n()));
            assert!(a.cycle_epsilon > 0.0 && a.cycle_epsilon.is_finite());
            assert!(is_reversible(&a.base, &a.pi).unwrap());
            assert!(is_reversible(&a.reversible().unwrap(), &a.pi).unwrap());
            let q = a.combined().unwrap();
            let st = stationary_measure(&q).unwrap();
            for (x, y) in st.weights().iter().zip(a.pi.weights()) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }
}
