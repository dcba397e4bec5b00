//! Turns a configuration into result rows.

use std::f64::consts::PI;
use std::path::Path;

use accelmc::chain::{
    asymptotic_variance, complete_graph, dv_rate_chain, observable_rate, random_instance, rate_gap_identity,
    replica_rng, replicated_variance, spectral_gap, BaseDynamics, CyclePerturbation, EnergyFunction, EnsembleSpec,
    GeneratorMatrix, Observable, PeskunPair, Perturbation, ProbabilityMeasure, peskun_perturbation,
};
use accelmc::diffusion::{
    compare_rates, euler_maruyama, observable_rate_langevin, replicated_variance_sde, rotation, solenoidal_drift,
    write_path, DensityField, IrreversibleDrift, MobilitySpec, PeriodicGrid, Point, PotentialSpec, TrigMode,
};
use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::config::{
    ChainConfig, DiffusionConfig, Dynamics, ExperimentConfig, ExplicitChain, Kind, MobilityName, ModeKind,
    ObservableName, PotentialName, Tolerances,
};

#[derive(Debug, Error)]
#[error("instance {instance}: {source}")]
pub struct RunError {
    pub instance: String,
    #[source]
    pub source: accelmc::Error,
}

trait Context<T> {
    fn at(self, instance: &str) -> Result<T, RunError>;
}

impl<T> Context<T> for accelmc::Result<T> {
    fn at(self, instance: &str) -> Result<T, RunError> {
        self.map_err(|source| RunError { instance: instance.to_string(), source })
    }
}

/// One comparison: `delta = perturbed - baseline`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub instance: String,
    pub criterion: String,
    pub baseline: f64,
    pub perturbed: f64,
    pub delta: f64,
    pub pass: bool,
}

impl ResultRow {
    fn new(instance: &str, criterion: &str, baseline: f64, perturbed: f64, pass: bool) -> Self {
        Self {
            instance: instance.to_string(),
            criterion: criterion.to_string(),
            baseline,
            perturbed,
            delta: perturbed - baseline,
            pass,
        }
    }

    /// Perturbed value must not exceed the baseline beyond a relative slack.
    fn not_above(instance: &str, criterion: &str, baseline: f64, perturbed: f64, tol: f64) -> Self {
        let pass = perturbed <= baseline + tol * (1.0 + baseline.abs());
        Self::new(instance, criterion, baseline, perturbed, pass)
    }

    fn not_below(instance: &str, criterion: &str, baseline: f64, perturbed: f64, tol: f64) -> Self {
        let pass = perturbed >= baseline - tol * (1.0 + baseline.abs());
        Self::new(instance, criterion, baseline, perturbed, pass)
    }

    fn matches(instance: &str, criterion: &str, baseline: f64, perturbed: f64, tol: f64) -> Self {
        let pass = (perturbed - baseline).abs() <= tol;
        Self::new(instance, criterion, baseline, perturbed, pass)
    }
}

/// A base generator with its two perturbations.
struct ChainCase {
    id: String,
    seed: u64,
    base: GeneratorMatrix,
    pi: ProbabilityMeasure,
    peskun: Perturbation,
    cycle: Perturbation,
    observable: Observable,
    measure: Option<ProbabilityMeasure>,
}

struct Generators {
    base: GeneratorMatrix,
    peskun: GeneratorMatrix,
    cycle: GeneratorMatrix,
    both: GeneratorMatrix,
}

impl ChainCase {
    fn generators(&self) -> Result<Generators, RunError> {
        Ok(Generators {
            base: self.base.clone(),
            peskun: self.base.perturb(&self.peskun).at(&self.id)?,
            cycle: self.base.perturb(&self.cycle).at(&self.id)?,
            both: self.base.perturb(&(&self.peskun + &self.cycle)).at(&self.id)?,
        })
    }

    /// Test measure for the rate comparisons: the configured one, else random weights in `[0.05, 1]`.
    fn test_measure(&self) -> Result<ProbabilityMeasure, RunError> {
        if let Some(m) = &self.measure {
            return Ok(m.clone());
        }
        let mut rng = replica_rng(self.seed, 1);
        let w: Vec<f64> = (0..self.base.n()).map(|_| rng.random_range(0.05..=1.0)).collect();
        ProbabilityMeasure::from_weights(&w).at(&self.id)
    }
}

fn base_dynamics(d: Dynamics, k: usize) -> BaseDynamics {
    match d {
        Dynamics::Glauber => BaseDynamics::Glauber,
        Dynamics::Metropolis => BaseDynamics::Metropolis,
        Dynamics::Alternate if k.is_multiple_of(2) => BaseDynamics::Glauber,
        Dynamics::Alternate => BaseDynamics::Metropolis,
    }
}

fn ensemble(c: &ChainConfig) -> EnsembleSpec {
    EnsembleSpec {
        min_states: c.min_states,
        max_states: c.max_states,
        energy_spread: c.energy_spread,
        edge_probability: c.edge_probability,
        cycle_budget: c.cycle_budget,
        peskun_max: c.peskun_max,
    }
}

pub fn instance_seed(seed: u64, k: usize) -> u64 {
    seed.wrapping_add(k as u64)
}

fn random_case(c: &ChainConfig, seed: u64, k: usize) -> Result<ChainCase, RunError> {
    let s = instance_seed(seed, k);
    let id = format!("i{k}-s{s}");
    let inst = random_instance(s, base_dynamics(c.dynamics, k), &ensemble(c)).at(&id)?;
    Ok(ChainCase {
        id,
        seed: s,
        base: inst.base,
        pi: inst.pi,
        peskun: inst.peskun,
        cycle: inst.cycle,
        observable: inst.observable,
        measure: None,
    })
}

fn explicit_case(c: &ChainConfig, ex: &ExplicitChain, seed: u64) -> Result<ChainCase, RunError> {
    let id = format!("explicit-s{seed}");
    let dynamics = base_dynamics(c.dynamics, 0);
    let h = EnergyFunction::new(ex.energies.clone()).at(&id)?;
    let n = h.n();
    let edges: Vec<(usize, usize)> = match &ex.edges {
        Some(e) => e.iter().map(|[i, j]| (*i, *j)).collect(),
        None => complete_graph(n),
    };
    let base = dynamics.generator(&h, Some(&edges)).at(&id)?;
    let pi = h.gibbs();
    let peskun = match &ex.peskun {
        Some(p) => peskun_perturbation(&PeskunPair::new(p.i, p.j, p.epsilon).at(&id)?, &pi).at(&id)?,
        None => Perturbation::zero(n),
    };
    let cycle = match &ex.cycle {
        Some(cy) => dynamics.cycle(&h, &CyclePerturbation::new(cy.states.clone(), cy.epsilon).at(&id)?).at(&id)?,
        None => Perturbation::zero(n),
    };
    let observable = match &ex.observable {
        Some(f) => Observable::new(f.clone()).at(&id)?,
        None => {
            let mut rng = replica_rng(seed, 2);
            Observable::new((0..n).map(|_| rng.random_range(-1.0..=1.0)).collect()).at(&id)?
        }
    };
    let measure = match &ex.measure {
        Some(m) => Some(ProbabilityMeasure::from_weights(m).at(&id)?),
        None => None,
    };
    Ok(ChainCase { id, seed, base, pi, peskun, cycle, observable, measure })
}

fn chain_cases(cfg: &ExperimentConfig) -> Vec<Result<ChainCase, RunError>> {
    let c = &cfg.chain;
    match &c.explicit {
        Some(ex) => vec![explicit_case(c, ex, cfg.seed)],
        None => (0..c.instances).into_par_iter().map(|k| random_case(c, cfg.seed, k)).collect(),
    }
}

/// Applies `metric` to each generator and emits the three nested comparisons.
fn nested_rows(
    id: &str,
    criterion: &str,
    g: &Generators,
    metric: impl Fn(&GeneratorMatrix) -> accelmc::Result<f64>,
    row: fn(&str, &str, f64, f64, f64) -> ResultRow,
    tol: f64,
) -> Result<Vec<ResultRow>, RunError> {
    let base = metric(&g.base).at(id)?;
    let peskun = metric(&g.peskun).at(id)?;
    let cycle = metric(&g.cycle).at(id)?;
    let both = metric(&g.both).at(id)?;
    Ok(vec![
        row(id, &format!("{criterion}:peskun"), base, peskun, tol),
        row(id, &format!("{criterion}:cycle"), base, cycle, tol),
        row(id, &format!("{criterion}:both"), peskun, both, tol),
    ])
}

fn chain_rows(cfg: &ExperimentConfig, case: &ChainCase, tol: &Tolerances) -> Result<Vec<ResultRow>, RunError> {
    let g = case.generators()?;
    let id = case.id.as_str();
    let (pi, f) = (&case.pi, &case.observable);
    let mut rows = Vec::new();
    match cfg.kind {
        Kind::ChainGap => {
            // `gap` is the leading nonzero real part, so faster mixing means a more negative value
            rows.extend(nested_rows(id, "gap", &g, |q| Ok(spectral_gap(q)?.gap), ResultRow::not_above, tol.ordering)?);
        }
        Kind::ChainVariance => {
            rows.extend(nested_rows(
                id,
                "variance",
                &g,
                |q| asymptotic_variance(q, pi, f),
                ResultRow::not_above,
                tol.ordering,
            )?);
            if let Some(sim) = &cfg.chain.simulate {
                let est = |q: &GeneratorMatrix| replicated_variance(q, pi, f, sim.t, sim.replicas, case.seed).at(id);
                let (base, peskun, cycle, both) = (est(&g.base)?, est(&g.peskun)?, est(&g.cycle)?, est(&g.both)?);
                for (name, b, p) in [("peskun", &base, &peskun), ("cycle", &base, &cycle), ("both", &peskun, &both)] {
                    let margin = tol.sigmas * (b.std_error.powi(2) + p.std_error.powi(2)).sqrt();
                    let pass = p.scaled_variance <= b.scaled_variance + margin;
                    rows.push(ResultRow::new(id, &format!("variance-mc:{name}"), b.scaled_variance, p.scaled_variance, pass));
                }
            }
        }
        Kind::ChainLdp => {
            let mu = case.test_measure()?;
            rows.extend(nested_rows(id, "rate", &g, |q| Ok(dv_rate_chain(q, &mu)?.value), ResultRow::not_below, tol.rate)?);
            let ident = rate_gap_identity(&case.base, &case.cycle, pi, &mu).at(id)?;
            rows.push(ResultRow::matches(id, "rate-identity", ident.lhs, ident.rhs, tol.identity * (1.0 + ident.lhs.abs())));
            let levels = cfg.chain.levels;
            let (lo, hi) = (f.min(), f.max());
            if levels > 0 && hi > lo {
                for k in 1..=levels {
                    let ell = lo + (hi - lo) * k as f64 / (levels + 1) as f64;
                    let lid = format!("{id}/l{k}");
                    rows.extend(nested_rows(
                        &lid,
                        "observable-rate",
                        &g,
                        |q| Ok(observable_rate(q, f, ell)?.value),
                        ResultRow::not_below,
                        tol.rate,
                    )?);
                }
            }
        }
        _ => unreachable!("diffusion kinds are handled separately"),
    }
    Ok(rows)
}

pub fn potential(name: PotentialName, temperature: f64) -> accelmc::Result<PotentialSpec> {
    match name {
        PotentialName::Cosine1d => PotentialSpec::cosine_1d(temperature),
        PotentialName::Cosine2d => PotentialSpec::cosine_2d(temperature),
        PotentialName::TwoWell2d => PotentialSpec::two_well_2d(temperature),
    }
}

pub fn mobility(name: MobilityName, param: f64) -> accelmc::Result<MobilitySpec> {
    match name {
        MobilityName::Identity => Ok(MobilitySpec::identity()),
        MobilityName::Constant => MobilitySpec::constant(param),
        MobilityName::SinSquared => Ok(MobilitySpec::sin_squared(param)),
    }
}

pub fn drift(pot: &PotentialSpec, delta: f64) -> accelmc::Result<Option<IrreversibleDrift>> {
    if delta == 0.0 {
        return Ok(None);
    }
    solenoidal_drift(pot, rotation(delta)).map(Some)
}

pub fn observable_fn(name: ObservableName) -> fn(&Point) -> f64 {
    match name {
        ObservableName::CosX1 => |x| x[0].cos(),
        ObservableName::SinX1 => |x| x[0].sin(),
        ObservableName::CosX2 => |x| x[1].cos(),
        ObservableName::SinX2 => |x| x[1].sin(),
        ObservableName::Mixed => |x| x[0].cos() + 0.5 * x[1].sin(),
    }
}

struct DiffusionModel {
    pot: PotentialSpec,
    mob: MobilitySpec,
    irr: Option<IrreversibleDrift>,
    f: fn(&Point) -> f64,
}

impl DiffusionModel {
    fn build(d: &DiffusionConfig, id: &str) -> Result<Self, RunError> {
        let pot = potential(d.potential, d.temperature).at(id)?;
        let mob = mobility(d.mobility, d.mobility_param).at(id)?;
        let irr = drift(&pot, d.drift).at(id)?;
        Ok(Self { pot, mob, irr, f: observable_fn(d.observable) })
    }
}

fn diffusion_sim_rows(
    cfg: &ExperimentConfig,
    tol: &Tolerances,
    artifacts: Option<&Path>,
) -> Result<Vec<ResultRow>, RunError> {
    let d = &cfg.diffusion;
    let id = format!("sim-s{}", cfg.seed);
    let m = DiffusionModel::build(d, &id)?;
    let f = m.f;
    let base =
        replicated_variance_sde(&m.pot, &MobilitySpec::identity(), None, &f, d.t, d.dt, d.replicas, cfg.seed).at(&id)?;
    let pert = replicated_variance_sde(&m.pot, &m.mob, m.irr.as_ref(), &f, d.t, d.dt, d.replicas, cfg.seed.wrapping_add(1))
        .at(&id)?;
    let var_margin = tol.sigmas * (base.std_error.powi(2) + pert.std_error.powi(2)).sqrt();
    let mean_margin = tol.sigmas * (base.mean_std_error(d.t).powi(2) + pert.mean_std_error(d.t).powi(2)).sqrt();
    let rows = vec![
        ResultRow::new(
            &id,
            "variance-mc",
            base.scaled_variance,
            pert.scaled_variance,
            pert.scaled_variance <= base.scaled_variance + var_margin,
        ),
        ResultRow::matches(&id, "mean", base.mean, pert.mean, mean_margin),
    ];
    if d.path_steps > 0 {
        if let Some(dir) = artifacts {
            let path = euler_maruyama(&m.pot, &m.mob, m.irr.as_ref(), [PI, PI], d.dt, d.path_steps, cfg.seed).at(&id)?;
            write_path(&path, &dir.join("path.bin")).at(&id)?;
        }
    }
    Ok(rows)
}

fn density(g: &PeriodicGrid, d: &DiffusionConfig, pot: &PotentialSpec) -> accelmc::Result<DensityField> {
    if d.gibbs_density {
        return DensityField::gibbs(g, pot);
    }
    if d.density.is_empty() {
        return Ok(DensityField::uniform(g));
    }
    let modes: Vec<TrigMode> = d
        .density
        .iter()
        .map(|m| match m.kind {
            ModeKind::Sin => TrigMode::sin(m.wave, m.amplitude),
            ModeKind::Cos => TrigMode::cos(m.wave, m.amplitude),
        })
        .collect();
    DensityField::trigonometric(g, &modes)
}

fn diffusion_ldp_rows(cfg: &ExperimentConfig, tol: &Tolerances) -> Result<Vec<ResultRow>, RunError> {
    let d = &cfg.diffusion;
    let id = format!("grid{}-s{}", d.nodes, cfg.seed);
    let m = DiffusionModel::build(d, &id)?;
    let g = PeriodicGrid::uniform(*m.pot.domain(), d.nodes).at(&id)?;
    let dens = density(&g, d, &m.pot).at(&id)?;
    let cmp = compare_rates(&g, &m.pot, &m.mob, m.irr.as_ref(), &dens).at(&id)?;
    let (base, rev, full) = (cmp.baseline.value, cmp.reversible.value, cmp.full.value);
    let mut rows = vec![
        ResultRow::not_below(&id, "rate:mobility", base, rev, tol.discretization),
        ResultRow::not_below(&id, "rate:drift", rev, full, tol.discretization),
        ResultRow::matches(&id, "correction-reversible", rev - base, cmp.correction_reversible, tol.correction),
        ResultRow::matches(&id, "correction-irreversible", full - rev, cmp.correction_irreversible, tol.correction),
    ];
    if d.levels > 0 {
        let og = PeriodicGrid::uniform(*m.pot.domain(), d.observable_nodes).at(&id)?;
        let values = og.sample(m.f);
        let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
        let identity = MobilitySpec::identity();
        for k in 1..=d.levels {
            let ell = lo + (hi - lo) * k as f64 / (d.levels + 1) as f64;
            let lid = format!("{id}/l{k}");
            let rate = |mob: &MobilitySpec, irr: Option<&IrreversibleDrift>| {
                observable_rate_langevin(&og, &m.pot, mob, irr, m.f, ell).map(|r| r.value).at(&lid)
            };
            let b = rate(&identity, None)?;
            let r = rate(&m.mob, None)?;
            let full = rate(&m.mob, m.irr.as_ref())?;
            rows.push(ResultRow::not_below(&lid, "observable-rate:mobility", b, r, tol.rate));
            rows.push(ResultRow::not_below(&lid, "observable-rate:drift", r, full, tol.rate));
        }
    }
    Ok(rows)
}

/// Runs one configuration. `artifacts` receives auxiliary files such as sample paths.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    tol: &Tolerances,
    artifacts: Option<&Path>,
) -> Result<Vec<ResultRow>, RunError> {
    match cfg.kind {
        Kind::ChainGap | Kind::ChainVariance | Kind::ChainLdp => {
            let per_case: Vec<Result<Vec<ResultRow>, RunError>> = chain_cases(cfg)
                .into_par_iter()
                .map(|case| chain_rows(cfg, &case?, tol))
                .collect();
            let mut rows = Vec::new();
            for r in per_case {
                rows.extend(r?);
            }
            Ok(rows)
        }
        Kind::DiffusionSim => diffusion_sim_rows(cfg, tol, artifacts),
        Kind::DiffusionLdp => diffusion_ldp_rows(cfg, tol),
    }
}
