//! Run configuration files.
//!
//! ```toml
//! [model]
//! kind = "schlieren"
//! batch_size = 6
//! size = 32
//! n_angles = 30
//!
//! [solver]
//! mode = "practice"
//! r_x = 1.1
//! r_y = 2.0
//! epochs = 200
//!
//! [schedule]
//! mu0 = 0.5
//! decay = 0.0
//!
//! [noise]
//! kind = "gaussian"
//! epsilon = 0.01
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::array_io::load_array;
use crate::error::{Error, Result};
use crate::forward::{model_registry, BuildContext, ForwardProblem};
use crate::noise::NoiseSpec;
use crate::solver::{ExponentMode, InitialGuess, RecordEvery, ScheduleSpec, SolverConfig, StoppingRule};

/// Manifest-only table, skipped when a manifest is read back as a config.
pub const DIAGNOSTICS_KEY: &str = "diagnostics";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSection {
    /// Registered forward model: `schlieren` or `benchmark`.
    pub kind: String,
    /// Measurements per block; must divide the measurement count.
    pub batch_size: usize,
    /// Model-specific parameters.
    #[serde(flatten)]
    pub params: toml::Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default = "default_algorithm")]
    pub algorithm: String,
    #[serde(default)]
    pub mode: ExponentMode,
    pub r_x: f64,
    pub r_y: f64,
    pub epochs: u64,
    #[serde(default)]
    pub seed: u64,
    /// Seeds per cell in sweeps and rate studies.
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    #[serde(default)]
    pub record: RecordEvery,
    /// Constant initial guess, unless `initial_path` is given.
    #[serde(default)]
    pub initial: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_path: Option<PathBuf>,
}

fn default_algorithm() -> String {
    "sgd".into()
}

fn default_seeds() -> usize {
    1
}

/// Sampling of `γ̂` and `L̂_max` around the truth (or the initial guess).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateSection {
    /// Sample pairs; 0 disables sampling.
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Euclidean ball radius relative to the norm of the centre.
    #[serde(default = "default_relative_radius")]
    pub relative_radius: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_samples() -> usize {
    4
}

fn default_relative_radius() -> f64 {
    0.1
}

impl Default for EstimateSection {
    fn default() -> Self {
        Self {
            samples: default_samples(),
            relative_radius: default_relative_radius(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    NoiseLevel,
    BatchSize,
    SpaceExponent,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::NoiseLevel => "noise_level",
            SweepAxis::BatchSize => "batch_size",
            SweepAxis::SpaceExponent => "space_exponent",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    /// With `space_exponent`, also set `r_Y` to each value.
    #[serde(default)]
    pub tie_data_exponent: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyKind {
    Exact,
    Noisy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesSection {
    pub study: StudyKind,
    #[serde(default)]
    pub deltas: Vec<f64>,
    #[serde(default = "default_budget")]
    pub gamma_budget: f64,
}

fn default_budget() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub solver: SolverSection,
    pub schedule: ScheduleSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseSpec>,
    #[serde(default = "default_stopping")]
    pub stopping: StoppingRule,
    #[serde(default)]
    pub estimate: EstimateSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rates: Option<RatesSection>,
}

fn default_stopping() -> StoppingRule {
    StoppingRule::MaxEpochs
}

/// Command-line values taking precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub epochs: Option<u64>,
}

impl RunConfig {
    /// Parses a config or a manifest (whose diagnostics table is ignored).
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e| Error::Config(format!("{e}")))?;
        table.remove(DIAGNOSTICS_KEY);
        let config: RunConfig = table.try_into().map_err(|e| Error::Config(format!("{e}")))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads `path`, resolving relative file references against its
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        Ok(config)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("{e}")))
    }

    fn resolve_paths(&mut self, base: &Path) {
        let absolute = |p: &Path| if p.is_relative() { base.join(p) } else { p.to_path_buf() };
        if let Some(p) = &self.solver.initial_path {
            self.solver.initial_path = Some(absolute(p));
        }
        if let Some(p) = self.model.params.get("phantom_path").and_then(|v| v.as_str()) {
            let resolved = absolute(Path::new(p)).to_string_lossy().into_owned();
            self.model.params.insert("phantom_path".into(), toml::Value::String(resolved));
        }
        if let Some(p) = &self.output.dir {
            self.output.dir = Some(absolute(p));
        }
    }

    pub fn apply(&mut self, overrides: &Overrides) {
        if let Some(out) = &overrides.out {
            self.output.dir = Some(out.clone());
        }
        if let Some(seed) = overrides.seed {
            self.solver.seed = seed;
        }
        if let Some(epochs) = overrides.epochs {
            self.solver.epochs = epochs;
        }
    }

    pub fn validate(&self) -> Result<()> {
        model_registry().get(&self.model.kind)?;
        if self.model.batch_size == 0 {
            return Err(Error::Config("model.batch_size must be positive".into()));
        }
        if self.solver.seeds == 0 {
            return Err(Error::Config("solver.seeds must be positive".into()));
        }
        if let Some(noise) = &self.noise {
            crate::noise::noise_registry().get(&noise.kind)?;
        }
        if !(self.estimate.relative_radius > 0.0) {
            return Err(Error::Config("estimate.relative_radius must be positive".into()));
        }
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return Err(Error::Config("sweep.values is empty".into()));
            }
        }
        self.solver_config(None)?.validate()
    }

    pub fn output_dir(&self) -> Result<&Path> {
        self.output
            .dir
            .as_deref()
            .ok_or_else(|| Error::Config("no output directory: set output.dir or pass --out".into()))
    }

    /// Solver settings; `initial` replaces the configured initial guess.
    pub fn solver_config(&self, initial: Option<InitialGuess>) -> Result<SolverConfig> {
        let s = &self.solver;
        let mut config = SolverConfig::new(s.mode, s.r_x, s.r_y, self.schedule.clone());
        config.algorithm = s.algorithm.clone();
        config.max_epochs = s.epochs;
        config.seed = s.seed;
        config.stopping = self.stopping;
        config.record = s.record;
        config.initial = initial.unwrap_or(InitialGuess::Constant(s.initial));
        Ok(config)
    }

    pub fn initial_guess(&self) -> Result<InitialGuess> {
        match &self.solver.initial_path {
            Some(path) => Ok(InitialGuess::Array(load_array(path)?)),
            None => Ok(InitialGuess::Constant(self.solver.initial)),
        }
    }

    pub fn build_problem(&self, base_dir: &Path) -> Result<ForwardProblem> {
        let ctx = BuildContext {
            batch_size: self.model.batch_size,
            base_dir: base_dir.to_path_buf(),
        };
        model_registry().get(&self.model.kind)?.build(&self.model.params, &ctx)
    }
}
