use std::path::{Path, PathBuf};

use macrocell::dynamics::Normalization;
use macrocell::hilbert::ModelKind;
use macrocell::observables::Placement;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    CommutatorScaling,
    PhaseCells,
    SuperpositionMixture,
    BasisAmbiguity,
    OverlapScaling,
    Dynamics,
    Revival,
    Pointer,
}

impl Experiment {
    pub const ALL: [Experiment; 8] = [
        Experiment::CommutatorScaling,
        Experiment::PhaseCells,
        Experiment::SuperpositionMixture,
        Experiment::BasisAmbiguity,
        Experiment::OverlapScaling,
        Experiment::Dynamics,
        Experiment::Revival,
        Experiment::Pointer,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::CommutatorScaling => "commutator-scaling",
            Experiment::PhaseCells => "phase-cells",
            Experiment::SuperpositionMixture => "superposition-mixture",
            Experiment::BasisAmbiguity => "basis-ambiguity",
            Experiment::OverlapScaling => "overlap-scaling",
            Experiment::Dynamics => "dynamics",
            Experiment::Revival => "revival",
            Experiment::Pointer => "pointer",
        }
    }

    pub fn paper_anchor(self) -> &'static str {
        match self {
            Experiment::CommutatorScaling => "quasi-commutation of intensive macro observables",
            Experiment::PhaseCells => "phase cells from common approximate eigenvectors",
            Experiment::SuperpositionMixture => "distinct-cell superposition indistinguishable from a mixture",
            Experiment::BasisAmbiguity => "no basis ambiguity for macroscopic superpositions",
            Experiment::OverlapScaling => "few-body matrix elements suppressed by the per-site overlap",
            Experiment::Dynamics => "phase-cell transition matrix and the disorder assumption",
            Experiment::Revival => "recoherence of separately evolved branches",
            Experiment::Pointer => "Gaussian pointer with collective momentum",
        }
    }

    pub fn summary(self) -> &'static str {
        match self {
            Experiment::CommutatorScaling => "‖[A, B]‖ of two intensive observables over a range of system sizes",
            Experiment::PhaseCells => "cell values, dimensions and residuals of one decomposition",
            Experiment::SuperpositionMixture => "superposition vs mixture expectation for random distinct-cell pairs",
            Experiment::BasisAmbiguity => "variance and macro-state verdicts for every pair of cells",
            Experiment::OverlapScaling => "|⟨Φ_i|A|Φ_j⟩| for tilted product states over a range of N",
            Experiment::Dynamics => "cell weights, transition matrices, disorder residuals",
            Experiment::Revival => "overlap and interference of two evolved orthogonal states",
            Experiment::Pointer => "branch overlap, centre of mass and interference over N and t",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default = "default_observables")]
    pub observables: Vec<ObservableConfig>,
    #[serde(default)]
    pub times: TimeGrid,
    #[serde(default)]
    pub commutator: CommutatorConfig,
    #[serde(default)]
    pub overlap: OverlapConfig,
    #[serde(default)]
    pub mixture: MixtureConfig,
    #[serde(default)]
    pub dynamics: DynamicsConfig,
    #[serde(default)]
    pub revival: RevivalConfig,
    #[serde(default)]
    pub pointer: PointerConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub sites: usize,
    /// Empty for `diagonal-test` draws energies uniformly from [-1, 1].
    pub couplings: Vec<f64>,
    pub hbar: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::TransverseFieldIsing,
            sites: 4,
            couplings: vec![1.0, 0.7],
            hbar: 1.0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservableConfig {
    /// Pauli string such as `"z"` or `"zz"`.
    pub template: String,
    #[serde(default)]
    pub placement: Placement,
    pub delta: f64,
}

fn default_observables() -> Vec<ObservableConfig> {
    vec![ObservableConfig {
        template: "z".into(),
        placement: Placement::AllSubsets,
        delta: 0.3,
    }]
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiteRange {
    pub min: usize,
    pub max: usize,
}

impl SiteRange {
    pub fn values(&self) -> Vec<usize> {
        (self.min..=self.max).collect()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeGrid {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
    /// Explicit times; overrides the linear grid when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
}

impl Default for TimeGrid {
    fn default() -> Self {
        Self {
            start: 0.0,
            stop: 5.0,
            count: 21,
            values: None,
        }
    }
}

impl TimeGrid {
    pub fn values(&self) -> Vec<f64> {
        if let Some(v) = &self.values {
            return v.clone();
        }
        if self.count == 1 {
            return vec![self.start];
        }
        let step = (self.stop - self.start) / (self.count - 1) as f64;
        (0..self.count).map(|k| self.start + step * k as f64).collect()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CommutatorConfig {
    pub a: String,
    pub b: String,
    pub placement: Placement,
    pub sites: SiteRange,
}

impl Default for CommutatorConfig {
    fn default() -> Self {
        Self {
            a: "z".into(),
            b: "x".into(),
            placement: Placement::AllSubsets,
            sites: SiteRange { min: 2, max: 8 },
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OverlapConfig {
    pub template: String,
    pub placement: Placement,
    /// `Φ_j` is the product of `cos θ|0⟩ + sin θ|1⟩`, `Φ_i` of `|0⟩`.
    pub theta: f64,
    pub sites: SiteRange,
}

impl Default for OverlapConfig {
    fn default() -> Self {
        Self {
            template: "z".into(),
            placement: Placement::AllSubsets,
            theta: std::f64::consts::FRAC_PI_3,
            sites: SiteRange { min: 2, max: 10 },
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixtureConfig {
    pub pairs: usize,
}

impl Default for MixtureConfig {
    fn default() -> Self {
        Self { pairs: 100 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsConfig {
    /// Cell weights of the uniform-in-cell initial state. Defaults to all
    /// weight in the largest cell.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_weights: Option<Vec<f64>>,
    pub normalization: Normalization,
    /// Monte-Carlo samples per time; 0 skips the ensemble.
    pub samples: usize,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        Self {
            initial_weights: None,
            normalization: Normalization::ColumnStochastic,
            samples: 200,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RevivalConfig {
    /// Computational basis indices of the two states.
    pub phi1: usize,
    pub phi2: usize,
    /// Phase of `φ₂` in units of π.
    pub phase2: f64,
    /// Decomposition observable used for the interference.
    pub observable: usize,
}

impl Default for RevivalConfig {
    fn default() -> Self {
        Self {
            phi1: 0,
            phi2: 1,
            phase2: 0.5,
            observable: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PointerConfig {
    pub particles: SiteRange,
    pub sigma: f64,
    pub mass: f64,
    pub hbar: f64,
    /// Momentum per particle of each branch.
    pub momenta: [f64; 2],
    /// Initial centre of each branch.
    pub positions: [f64; 2],
    pub delta_p: f64,
}

impl Default for PointerConfig {
    fn default() -> Self {
        Self {
            particles: SiteRange { min: 1, max: 10 },
            sigma: 1.0,
            mass: 1.0,
            hbar: 1.0,
            momenta: [1.0, -1.0],
            positions: [-5.0, 5.0],
            delta_p: 0.5,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub format: Format,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            format: Format::Csv,
        }
    }
}

/// Reads `path`, applies `key=value` overrides, then deserializes.
pub fn load(path: &Path, overrides: &[String]) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse(&text, overrides)
}

pub fn parse(text: &str, overrides: &[String]) -> Result<ExperimentConfig, CliError> {
    let mut table: toml::Table = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    for item in overrides {
        apply_override(&mut table, item)?;
    }
    let config: ExperimentConfig = table.try_into().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

/// `a.b.c=value`; the value is read as a TOML literal and falls back to a
/// bare string. Numeric segments index into arrays.
fn apply_override(table: &mut toml::Table, item: &str) -> Result<(), CliError> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{item}` is not key=value")))?;
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let segments: Vec<&str> = key.trim().split('.').collect();
    if segments.iter().any(|s| s.is_empty()) {
        return Err(CliError::Config(format!("bad override key `{key}`")));
    }
    let (last, parents) = segments.split_last().expect("nonempty");
    let mut node = table
        .entry(parents.first().copied().unwrap_or(last).to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    if parents.is_empty() {
        *node = value;
        return Ok(());
    }
    for segment in parents[1..].iter().chain(std::iter::once(last)) {
        node = match node {
            toml::Value::Table(t) => t
                .entry(segment.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new())),
            toml::Value::Array(a) => {
                let index: usize = segment
                    .parse()
                    .map_err(|_| CliError::Config(format!("`{segment}` in `{key}` is not an array index")))?;
                let len = a.len();
                a.get_mut(index)
                    .ok_or_else(|| CliError::Config(format!("index {index} in `{key}` out of range (len {len})")))?
            }
            _ => return Err(CliError::Config(format!("`{key}` descends into a scalar"))),
        };
    }
    *node = value;
    Ok(())
}

fn positive(name: &str, v: f64) -> Result<(), CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(CliError::Config(format!("{name} must be positive, got {v}")))
    }
}

fn range(name: &str, r: SiteRange, min: usize) -> Result<(), CliError> {
    if r.min < min || r.min > r.max {
        return Err(CliError::Config(format!(
            "{name} must satisfy {min} ≤ min ≤ max, got {}..={}",
            r.min, r.max
        )));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.model.sites == 0 {
            return Err(CliError::Config("model.sites must be at least 1".into()));
        }
        positive("model.hbar", self.model.hbar)?;
        if self.observables.is_empty() {
            return Err(CliError::Config("at least one observable is required".into()));
        }
        for (k, o) in self.observables.iter().enumerate() {
            positive(&format!("observables[{k}].delta"), o.delta)?;
        }
        let times = self.times.values();
        if times.is_empty() || times.iter().any(|t| !t.is_finite()) {
            return Err(CliError::Config("times must be a nonempty list of finite values".into()));
        }
        match self.experiment {
            Experiment::CommutatorScaling => range("commutator.sites", self.commutator.sites, 1)?,
            Experiment::OverlapScaling => range("overlap.sites", self.overlap.sites, 1)?,
            Experiment::SuperpositionMixture if self.mixture.pairs == 0 => {
                return Err(CliError::Config("mixture.pairs must be at least 1".into()));
            }
            Experiment::Pointer => {
                range("pointer.particles", self.pointer.particles, 1)?;
                positive("pointer.sigma", self.pointer.sigma)?;
                positive("pointer.mass", self.pointer.mass)?;
                positive("pointer.hbar", self.pointer.hbar)?;
                positive("pointer.delta_p", self.pointer.delta_p)?;
            }
            _ => {}
        }
        Ok(())
    }
}
