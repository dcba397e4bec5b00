//! Experiment configuration files (TOML).

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("{path}:{line}:{column}: {message}")]
    Parse { path: String, line: usize, column: usize, message: String },
    #[error("{field}: {message}")]
    Field { field: String, message: String },
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

fn field_error(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Field { field: field.to_string(), message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    ChainGap,
    ChainVariance,
    ChainLdp,
    DiffusionSim,
    DiffusionLdp,
}

impl Kind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::ChainGap => "chain-gap",
            Self::ChainVariance => "chain-variance",
            Self::ChainLdp => "chain-ldp",
            Self::DiffusionSim => "diffusion-sim",
            Self::DiffusionLdp => "diffusion-ldp",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Kind,
    #[serde(default)]
    pub seed: u64,
    /// Output directory for `results.csv` and `summary.json`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(default)]
    pub tolerance: Tolerances,
    #[serde(default)]
    pub chain: ChainConfig,
    #[serde(default)]
    pub diffusion: DiffusionConfig,
}

/// Verdict tolerances; all are scaled by `--tolerance-scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Exact gap and variance orderings.
    pub ordering: f64,
    /// Chain rate and observable-rate orderings.
    pub rate: f64,
    /// Rate-gap identity on chains.
    pub identity: f64,
    /// Number of combined standard errors allowed in Monte Carlo comparisons.
    pub sigmas: f64,
    /// Correction integrals against rate differences on the grid.
    pub correction: f64,
    /// Grid rate orderings, which only hold up to discretization error.
    pub discretization: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { ordering: 1e-9, rate: 1e-8, identity: 1e-6, sigmas: 2.0, correction: 2e-3, discretization: 1e-3 }
    }
}

impl Tolerances {
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            ordering: self.ordering * s,
            rate: self.rate * s,
            identity: self.identity * s,
            sigmas: self.sigmas * s,
            correction: self.correction * s,
            discretization: self.discretization * s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dynamics {
    Glauber,
    Metropolis,
    /// Glauber for even instances, Metropolis for odd ones.
    Alternate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainConfig {
    pub dynamics: Dynamics,
    /// Number of random instances; ignored when `explicit` is given.
    pub instances: usize,
    pub min_states: usize,
    pub max_states: usize,
    pub energy_spread: f64,
    pub edge_probability: f64,
    pub cycle_budget: f64,
    pub peskun_max: f64,
    /// Points of the level grid for observable-rate rows (chain-ldp).
    pub levels: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulationConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub explicit: Option<ExplicitChain>,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            dynamics: Dynamics::Alternate,
            instances: 100,
            min_states: 3,
            max_states: 12,
            energy_spread: 2.0,
            edge_probability: 0.3,
            cycle_budget: 0.5,
            peskun_max: 1.0,
            levels: 0,
            simulate: None,
            explicit: None,
        }
    }
}

/// Replicated Gillespie runs for chain-variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub t: f64,
    pub replicas: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitChain {
    pub energies: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<[usize; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub peskun: Option<PeskunConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cycle: Option<CycleConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observable: Option<Vec<f64>>,
    /// Test measure for chain-ldp; defaults to a seeded random measure.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measure: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeskunConfig {
    pub i: usize,
    pub j: usize,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CycleConfig {
    pub states: Vec<usize>,
    pub epsilon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PotentialName {
    #[serde(rename = "cosine-1d")]
    Cosine1d,
    #[serde(rename = "cosine-2d")]
    Cosine2d,
    #[serde(rename = "two-well-2d")]
    TwoWell2d,
}

impl PotentialName {
    pub fn dim(self) -> usize {
        match self {
            Self::Cosine1d => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MobilityName {
    Identity,
    /// `Sigma = c I` with `c = mobility_param`.
    Constant,
    /// `Sigma = (1 + a sin^2 x1) I` with `a = mobility_param`.
    SinSquared,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObservableName {
    CosX1,
    SinX1,
    CosX2,
    SinX2,
    /// `cos x1 + 0.5 sin x2`.
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeKind {
    Sin,
    Cos,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeConfig {
    pub wave: [i32; 2],
    pub amplitude: f64,
    pub kind: ModeKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiffusionConfig {
    pub potential: PotentialName,
    pub temperature: f64,
    pub mobility: MobilityName,
    pub mobility_param: f64,
    /// `delta` in `C = delta J grad U`; needs a 2D potential when nonzero.
    pub drift: f64,
    pub observable: ObservableName,
    // simulation
    pub t: f64,
    pub dt: f64,
    pub replicas: usize,
    /// When positive, one path of this many steps is written next to the results.
    pub path_steps: usize,
    // grid
    pub nodes: usize,
    /// Use the grid Gibbs density instead of the trigonometric modes.
    pub gibbs_density: bool,
    /// Trigonometric modes of the test density; empty means uniform.
    pub density: Vec<ModeConfig>,
    /// Points of the level grid for observable-rate rows.
    pub levels: usize,
    pub observable_nodes: usize,
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        Self {
            potential: PotentialName::Cosine1d,
            temperature: 1.0,
            mobility: MobilityName::Identity,
            mobility_param: 1.0,
            drift: 0.0,
            observable: ObservableName::CosX1,
            t: 100.0,
            dt: 5e-3,
            replicas: 100,
            path_steps: 0,
            nodes: 64,
            gibbs_density: false,
            density: Vec::new(),
            levels: 0,
            observable_nodes: 16,
        }
    }
}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map(|i| i + 1).unwrap_or(0) + 1;
    (line, column)
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, path: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let (line, column) = e.span().map(|s| line_column(text, s.start)).unwrap_or((0, 0));
            ConfigError::Parse { path: path.to_string(), line, column, message: e.message().to_string() }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.display().to_string(), message: e.to_string() })?;
        Self::from_toml(&text, &path.display().to_string())
    }

    pub fn to_value(&self) -> toml::Value {
        toml::Value::try_from(self).expect("configuration serializes to TOML")
    }

    pub fn from_value(value: toml::Value) -> Result<Self, ConfigError> {
        let cfg: Self = value.try_into().map_err(|e: toml::de::Error| field_error("config", e.message()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks references and ranges that the schema alone cannot express.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let t = &self.tolerance;
        for (name, v) in [
            ("ordering", t.ordering),
            ("rate", t.rate),
            ("identity", t.identity),
            ("sigmas", t.sigmas),
            ("correction", t.correction),
            ("discretization", t.discretization),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(field_error(&format!("tolerance.{name}"), "must be positive"));
            }
        }
        match self.kind {
            Kind::ChainGap | Kind::ChainVariance | Kind::ChainLdp => self.chain.validate(),
            Kind::DiffusionSim | Kind::DiffusionLdp => self.diffusion.validate(self.kind),
        }
    }
}

impl ChainConfig {
    fn validate(&self) -> Result<(), ConfigError> {
        if let Some(sim) = &self.simulate {
            if !(sim.t > 0.0) || !sim.t.is_finite() {
                return Err(field_error("chain.simulate.t", "must be positive"));
            }
            if sim.replicas < 2 {
                return Err(field_error("chain.simulate.replicas", "need at least 2 replicas"));
            }
        }
        if let Some(ex) = &self.explicit {
            return ex.validate();
        }
        if self.min_states < 3 {
            return Err(field_error("chain.min_states", "random instances need at least 3 states"));
        }
        if self.max_states < self.min_states {
            return Err(field_error("chain.max_states", "must be >= chain.min_states"));
        }
        if !(0.0..1.0).contains(&self.cycle_budget) {
            return Err(field_error("chain.cycle_budget", "must lie in [0, 1)"));
        }
        if !(self.peskun_max > 0.0) {
            return Err(field_error("chain.peskun_max", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.edge_probability) {
            return Err(field_error("chain.edge_probability", "must lie in [0, 1]"));
        }
        if !(self.energy_spread >= 0.0) || !self.energy_spread.is_finite() {
            return Err(field_error("chain.energy_spread", "must be finite and nonnegative"));
        }
        Ok(())
    }
}

impl ExplicitChain {
    fn validate(&self) -> Result<(), ConfigError> {
        let n = self.energies.len();
        if n < 2 {
            return Err(field_error("chain.explicit.energies", "need at least 2 states"));
        }
        if self.energies.iter().any(|e| !e.is_finite()) {
            return Err(field_error("chain.explicit.energies", "entries must be finite"));
        }
        if let Some(edges) = &self.edges {
            for (k, [i, j]) in edges.iter().enumerate() {
                if *i >= n || *j >= n || i == j {
                    return Err(field_error(&format!("chain.explicit.edges[{k}]"), "must join two distinct states"));
                }
            }
        }
        if let Some(p) = &self.peskun {
            if p.i >= n || p.j >= n || p.i == p.j {
                return Err(field_error("chain.explicit.peskun", "i and j must be distinct states"));
            }
            if !(p.epsilon >= 0.0) {
                return Err(field_error("chain.explicit.peskun.epsilon", "must be nonnegative"));
            }
        }
        if let Some(c) = &self.cycle {
            if c.states.len() < 3 {
                return Err(field_error("chain.explicit.cycle.states", "a cycle needs at least 3 states"));
            }
            if c.states.iter().any(|s| *s >= n) {
                return Err(field_error("chain.explicit.cycle.states", "state index out of range"));
            }
            if !(c.epsilon >= 0.0) {
                return Err(field_error("chain.explicit.cycle.epsilon", "must be nonnegative"));
            }
        }
        for (name, v) in [("observable", &self.observable), ("measure", &self.measure)] {
            if let Some(v) = v {
                if v.len() != n {
                    return Err(field_error(&format!("chain.explicit.{name}"), format!("expected {n} entries")));
                }
            }
        }
        Ok(())
    }
}

impl DiffusionConfig {
    fn validate(&self, kind: Kind) -> Result<(), ConfigError> {
        if !(self.temperature > 0.0) {
            return Err(field_error("diffusion.temperature", "must be positive"));
        }
        if self.mobility != MobilityName::Identity && !(self.mobility_param.is_finite()) {
            return Err(field_error("diffusion.mobility_param", "must be finite"));
        }
        if self.mobility == MobilityName::Constant && !(self.mobility_param > 0.0) {
            return Err(field_error("diffusion.mobility_param", "constant mobility must be positive"));
        }
        if self.drift != 0.0 && self.potential.dim() < 2 {
            return Err(field_error("diffusion.drift", "a solenoidal drift needs a 2D potential"));
        }
        let needs_2d = matches!(self.observable, ObservableName::CosX2 | ObservableName::SinX2 | ObservableName::Mixed);
        if needs_2d && self.potential.dim() < 2 {
            return Err(field_error("diffusion.observable", "observable uses x2 on a 1D torus"));
        }
        match kind {
            Kind::DiffusionSim => {
                if !(self.t > 0.0) {
                    return Err(field_error("diffusion.t", "must be positive"));
                }
                if !(self.dt > 0.0) {
                    return Err(field_error("diffusion.dt", "must be positive"));
                }
                if self.replicas < 2 {
                    return Err(field_error("diffusion.replicas", "need at least 2 replicas"));
                }
            }
            _ => {
                if self.nodes < 16 {
                    return Err(field_error("diffusion.nodes", "need at least 16 nodes per axis"));
                }
                if self.levels > 0 && self.observable_nodes < 16 {
                    return Err(field_error("diffusion.observable_nodes", "need at least 16 nodes per axis"));
                }
                let total: f64 = self.density.iter().map(|m| m.amplitude.abs()).sum();
                if total >= 1.0 {
                    return Err(field_error("diffusion.density", "mode amplitudes must sum to less than 1"));
                }
            }
        }
        Ok(())
    }
}

/// Replaces the value at a dotted key, which must already exist in the fully defaulted config.
pub fn set_dotted(value: &mut toml::Value, key: &str, new: toml::Value) -> Result<(), ConfigError> {
    let mut cur = value;
    let parts: Vec<&str> = key.split('.').collect();
    for (depth, part) in parts.iter().enumerate() {
        let table = cur
            .as_table_mut()
            .ok_or_else(|| field_error(key, format!("`{}` is not a table", parts[..depth].join("."))))?;
        cur = table.get_mut(*part).ok_or_else(|| field_error(key, "no such parameter"))?;
    }
    *cur = new;
    Ok(())
}

/// Parses one sweep value as a TOML literal, falling back to a bare string.
pub fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    toml::from_str::<toml::Table>(&doc)
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}
