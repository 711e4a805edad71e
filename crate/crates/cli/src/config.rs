//! Run configuration (schema version 1).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use srde_core::coefficients::{validate, SampleSet};
use srde_core::noise::CorrelationKernel;
use srde_core::solver::{default_schedule, step_count, Stepper};
use srde_core::{CoefficientSet, Grid, InitialCondition, ModelSpec};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;
pub const TOOL: &str = concat!("srde ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: u32,
    pub model: ModelConfig,
    pub grid: GridConfig,
    #[serde(default)]
    pub stopping: StoppingConfig,
    #[serde(default)]
    pub ensemble: EnsembleConfig,
    #[serde(default)]
    pub outputs: OutputConfig,
    #[serde(default)]
    pub holder: HolderConfig,
    #[serde(default)]
    pub blowup: BlowupConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<PhaseConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub beta: f64,
    pub gamma: f64,
    pub kappa: f64,
    #[serde(default = "one")]
    pub dim: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub initial: InitialConfig,
    pub kernel: KernelConfig,
    #[serde(default)]
    pub coefficients: CoefficientConfig,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialConfig {
    Constant { value: f64 },
    Bump { amplitude: f64, width: f64 },
    Field { values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelConfig {
    White,
    Riesz { alpha: f64 },
    OrnsteinUhlenbeck { exponent: f64 },
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientConfig {
    pub preset: String,
    /// Sets `b̄ ≡ 0`; runs are flagged as outside the theory.
    #[serde(default)]
    pub disable_dissipation: bool,
}

impl Default for CoefficientConfig {
    fn default() -> Self {
        Self {
            preset: "identity".into(),
            disable_dissipation: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Nodes per axis.
    pub n_x: usize,
    #[serde(rename = "L", default = "default_period")]
    pub period: f64,
    pub dt: f64,
}

fn default_period() -> f64 {
    16.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoppingConfig {
    /// Dissipation-budget cap; none by default.
    #[serde(rename = "S", default)]
    pub dissipation_cap: Option<f64>,
    /// Sup-norm threshold at which a path counts as exploded.
    #[serde(rename = "R", default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_schedule")]
    pub m_schedule: Vec<f64>,
}

fn default_threshold() -> f64 {
    1000.0
}

impl Default for StoppingConfig {
    fn default() -> Self {
        Self {
            dissipation_cap: None,
            threshold: default_threshold(),
            m_schedule: default_schedule(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    #[serde(default = "default_seeds")]
    pub seeds: u64,
    #[serde(default)]
    pub first_seed: u64,
    /// Worker threads; defaults to the available cores. Never affects results.
    #[serde(default)]
    pub parallelism: Option<usize>,
    /// Largest explosion fraction for a passing non-explosion verdict.
    #[serde(default = "default_explosion_tolerance")]
    pub explosion_tolerance: f64,
}

fn default_seeds() -> u64 {
    1
}

fn default_explosion_tolerance() -> f64 {
    0.025
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            seeds: default_seeds(),
            first_seed: 0,
            parallelism: None,
            explosion_tolerance: default_explosion_tolerance(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Record,
    Csv,
    Json,
    Svg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_directory")]
    pub directory: PathBuf,
    /// Keep a field snapshot every this many steps; 0 keeps none.
    #[serde(default)]
    pub snapshot_every: u64,
    #[serde(default = "default_series_every")]
    pub series_every: u64,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

fn default_directory() -> PathBuf {
    PathBuf::from("out")
}

fn default_series_every() -> u64 {
    1
}

fn default_formats() -> Vec<Format> {
    vec![Format::Record, Format::Csv, Format::Json, Format::Svg]
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: default_directory(),
            snapshot_every: 0,
            series_every: default_series_every(),
            formats: default_formats(),
        }
    }
}

impl OutputConfig {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HolderConfig {
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Allowed distance between estimate and prediction.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    /// Lag window in length units; defaults to `[Δx, 8Δx]`.
    #[serde(default)]
    pub space_window: Option<[f64; 2]>,
    /// Lag window in time units; defaults to the finest four dyadic
    /// multiples of the snapshot spacing.
    #[serde(default)]
    pub time_window: Option<[f64; 2]>,
}

fn default_epsilon() -> f64 {
    0.01
}

fn default_tolerance() -> f64 {
    0.1
}

impl Default for HolderConfig {
    fn default() -> Self {
        Self {
            epsilon: default_epsilon(),
            tolerance: default_tolerance(),
            space_window: None,
            time_window: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlowupConfig {
    /// Thresholds of the exceedance table.
    #[serde(default = "default_thresholds")]
    pub thresholds: Vec<f64>,
}

fn default_thresholds() -> Vec<f64> {
    (0..10).map(|k| f64::from(1u32 << k)).collect()
}

impl Default for BlowupConfig {
    fn default() -> Self {
        Self {
            thresholds: default_thresholds(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseConfig {
    pub betas: Vec<f64>,
    pub gammas: Vec<f64>,
    #[serde(default = "default_cell_seeds")]
    pub seeds_per_cell: u64,
}

fn default_cell_seeds() -> u64 {
    20
}

pub const MIN_CELL_SEEDS: u64 = 20;

/// Parses a configuration document, reporting the failing field path and
/// position.
pub fn parse(text: &str) -> Result<RunConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let config: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let inner = e.inner();
        CliError::Config(format!(
            "{} (field `{}`, line {}, column {})",
            inner,
            e.path(),
            inner.line(),
            inner.column()
        ))
    })?;
    if config.schema != SCHEMA_VERSION {
        return Err(CliError::Config(format!(
            "unsupported schema version {} (expected {SCHEMA_VERSION})",
            config.schema
        )));
    }
    Ok(config)
}

pub fn load(path: &Path) -> Result<RunConfig, CliError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse(&text)
}

impl RunConfig {
    /// SHA-256 of the canonical serialisation, with the output directory
    /// blanked so relocating outputs keeps the hash.
    pub fn hash(&self) -> [u8; 32] {
        let mut c = self.clone();
        c.outputs.directory = PathBuf::new();
        let bytes = serde_json::to_vec(&c).expect("configuration serialises");
        Sha256::digest(&bytes).into()
    }

    pub fn hash_hex(&self) -> String {
        self.hash().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn kernel(&self) -> Result<CorrelationKernel, CliError> {
        let d = self.model.dim;
        match self.model.kernel {
            KernelConfig::White => CorrelationKernel::white(d),
            KernelConfig::Riesz { alpha } => CorrelationKernel::riesz(alpha, d),
            KernelConfig::OrnsteinUhlenbeck { exponent } => CorrelationKernel::ornstein_uhlenbeck(exponent, d),
            KernelConfig::Constant => CorrelationKernel::constant(d),
        }
        .map_err(config_err("model.kernel"))
    }

    pub fn coefficients(&self) -> Result<CoefficientSet, CliError> {
        let c = &self.model.coefficients;
        let set = CoefficientSet::preset(&c.preset, self.model.dim, self.grid.period)
            .map_err(config_err("model.coefficients.preset"))?;
        Ok(if c.disable_dissipation { set.without_dissipation() } else { set })
    }

    pub fn initial(&self) -> InitialCondition {
        match &self.model.initial {
            InitialConfig::Constant { value } => InitialCondition::Constant(*value),
            InitialConfig::Bump { amplitude, width } => InitialCondition::Bump {
                amplitude: *amplitude,
                width: *width,
            },
            InitialConfig::Field { values } => InitialCondition::Field(values.clone()),
        }
    }

    pub fn model_spec(&self) -> Result<ModelSpec, CliError> {
        let m = &self.model;
        let spec = ModelSpec {
            beta: m.beta,
            gamma: m.gamma,
            kappa: m.kappa,
            dim: m.dim,
            horizon: m.horizon,
            u0: self.initial(),
            kernel: self.kernel()?,
            coeffs: self.coefficients()?,
        };
        spec.check().map_err(config_err("model"))?;
        Ok(spec)
    }

    pub fn grid(&self) -> Result<Grid, CliError> {
        Grid::new(self.model.dim, self.grid.n_x, self.grid.period).map_err(config_err("grid"))
    }
}

fn config_err(field: &'static str) -> impl Fn(srde_core::Error) -> CliError {
    move |e| CliError::Config(format!("{field}: {e}"))
}

/// A validated configuration with everything a run needs.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub config: RunConfig,
    pub hash: [u8; 32],
    pub hash_hex: String,
    pub spec: ModelSpec,
    pub grid: Grid,
    pub dt: f64,
    pub step_bound: f64,
    pub steps: u64,
}

/// Resolves presets, validates coefficients and checks `dt` against the
/// solver's step bound before anything runs.
pub fn prepare(config: RunConfig) -> Result<Prepared, CliError> {
    let spec = config.model_spec()?;
    let grid = config.grid()?;
    spec.u0.materialize(&grid).map_err(config_err("model.initial"))?;
    let dt = config.grid.dt;
    let stepper = Stepper::new(&spec, grid, dt).map_err(config_err("grid.dt"))?;
    let steps = step_count(spec.horizon, dt).map_err(config_err("grid.dt"))?;
    validate(&spec.coeffs, &SampleSet::standard(spec.dim, grid.period, spec.horizon))
        .map_err(config_err("model.coefficients"))?;

    let s = &config.stopping;
    if let Some(cap) = s.dissipation_cap {
        if !(cap > 0.0) {
            return Err(CliError::Config(format!("stopping.S: must be positive, got {cap}")));
        }
    }
    if s.m_schedule.is_empty() || s.m_schedule[0] < 2.0 || s.m_schedule.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CliError::Config(
            "stopping.m_schedule: levels must be strictly increasing and start at 2 or more".into(),
        ));
    }
    if !(s.threshold >= 1.0) || !s.threshold.is_finite() {
        return Err(CliError::Config(format!("stopping.R: must be at least 1, got {}", s.threshold)));
    }
    let b = &config.blowup.thresholds;
    if b.is_empty() || b.iter().any(|r| !(*r > 0.0)) {
        return Err(CliError::Config("blowup.thresholds: need at least one positive threshold".into()));
    }
    if config.ensemble.seeds == 0 {
        return Err(CliError::Config("ensemble.seeds: must be at least 1".into()));
    }
    if config.ensemble.parallelism == Some(0) {
        return Err(CliError::Config("ensemble.parallelism: must be at least 1".into()));
    }
    if config.outputs.series_every == 0 {
        return Err(CliError::Config("outputs.series_every: must be at least 1".into()));
    }
    let h = &config.holder;
    for (name, w) in [("space_window", h.space_window), ("time_window", h.time_window)] {
        if let Some([lo, hi]) = w {
            if !(lo > 0.0 && hi >= lo) {
                return Err(CliError::Config(format!("holder.{name}: need 0 < lo ≤ hi")));
            }
        }
    }
    let hash = config.hash();
    let hash_hex = config.hash_hex();
    Ok(Prepared {
        config,
        hash,
        hash_hex,
        spec,
        grid,
        dt,
        step_bound: stepper.step_bound(),
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "schema": 1,
        "model": {"beta": 8, "gamma": 0.3, "kappa": 0.49, "T": 0.25,
                  "initial": {"kind": "constant", "value": 1},
                  "kernel": {"kind": "white"}},
        "grid": {"n_x": 64, "dt": 0.0009765625}
    }"#;

    #[test]
    fn minimal_config_fills_defaults() {
        let c = parse(MINIMAL).unwrap();
        assert_eq!(c.model.dim, 1);
        assert_eq!(c.grid.period, 16.0);
        assert_eq!(c.stopping.m_schedule.last(), Some(&1024.0));
        assert_eq!(c.stopping.threshold, 1000.0);
        let p = prepare(c).unwrap();
        assert_eq!(p.steps, 256);
    }

    #[test]
    fn parse_errors_name_the_field_and_line() {
        let bad = MINIMAL.replace("\"n_x\": 64", "\"n_x\": \"many\"");
        let CliError::Config(msg) = parse(&bad).unwrap_err() else { panic!() };
        assert!(msg.contains("grid.n_x") && msg.contains("line 6"), "{msg}");
        let unknown = MINIMAL.replace("\"T\"", "\"horizon\"");
        assert!(matches!(parse(&unknown), Err(CliError::Config(_))));
        let version = MINIMAL.replace("\"schema\": 1", "\"schema\": 2");
        assert!(matches!(parse(&version), Err(CliError::Config(_))));
    }

    #[test]
    fn hash_ignores_output_directory_only() {
        let a = parse(MINIMAL).unwrap();
        let mut b = a.clone();
        b.outputs.directory = "elsewhere".into();
        assert_eq!(a.hash(), b.hash());
        b.ensemble.first_seed = 3;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash_hex().len(), 64);
    }

    #[test]
    fn oversized_step_and_unknown_preset_are_config_errors() {
        // Identity diffusion is fully implicit, so only drift and reaction
        // constrain the step.
        let mut big = parse(&MINIMAL.replace("0.0009765625", "0.5").replace("0.25", "1")).unwrap();
        big.model.coefficients.preset = "variable-demo".into();
        assert!(matches!(prepare(big), Err(CliError::Config(m)) if m.starts_with("grid.dt")));
        let mut c = parse(MINIMAL).unwrap();
        c.model.coefficients.preset = "nope".into();
        assert!(matches!(prepare(c), Err(CliError::Config(_))));
        let mut c = parse(MINIMAL).unwrap();
        c.grid.dt = 0.0009;
        assert!(matches!(prepare(c), Err(CliError::Config(_))));
    }
}
