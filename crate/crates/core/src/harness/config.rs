//! Experiment configuration, read from TOML.
//!
//! ```toml
//! name = "lorenz-20"
//! seed = 0
//!
//! [system]
//! name = "lorenz"            # or: file = "path/to/system.coef"
//! x0 = [1.0, 1.0, 1.0]       # optional, per-system default
//!
//! [simulation]
//! dt = 0.0005
//! t_final = 20.0
//! burn_in_steps = 0
//!
//! [dictionary]
//! degree = 4
//!
//! [derivative]
//! method = "central"         # central | forward | exact
//!
//! [corruption]
//! fraction = 0.2
//! b_min = 5
//! b_max = 50
//! sigma = 1.0
//! target = "states"          # states | derivatives
//!
//! [noise]
//! sigma = 0.0
//!
//! [solver]
//! hard_thres = 0.1
//! row_thres = 0.0125
//! row_thres_mode = "shrinkage"  # shrinkage | level | state
//! tol = 0.005
//! max_iter = 500
//! c_step = "sequential"      # sequential | threshold
//! refit = true
//!
//! [decimation]
//! factor = 1
//!
//! [acceptance]
//! max_coeff_error = 5e-4
//! exact_detection = true
//! max_iterations = 60
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::SystemName;
use crate::error::{Error, Result};
use crate::solver::{CStep, SolveConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub system: SystemSection,
    pub simulation: SimulationSection,
    #[serde(default)]
    pub dictionary: DictionarySection,
    #[serde(default)]
    pub derivative: DerivativeSection,
    #[serde(default)]
    pub corruption: CorruptionSection,
    #[serde(default)]
    pub noise: NoiseSection,
    pub solver: SolverSection,
    #[serde(default)]
    pub decimation: DecimationSection,
    #[serde(default)]
    pub acceptance: Acceptance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<SystemName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub dt: f64,
    pub t_final: f64,
    #[serde(default)]
    pub burn_in_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DictionarySection {
    pub degree: u32,
}

impl Default for DictionarySection {
    fn default() -> Self {
        Self { degree: 4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DerivativeMethod {
    #[default]
    Central,
    Forward,
    /// `f(x)` evaluated on the clean trajectory.
    Exact,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DerivativeSection {
    #[serde(default)]
    pub method: DerivativeMethod,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorruptionTarget {
    #[default]
    States,
    Derivatives,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorruptionSection {
    pub fraction: f64,
    #[serde(default = "default_b_min")]
    pub b_min: usize,
    #[serde(default = "default_b_max")]
    pub b_max: usize,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    /// Defaults to the experiment seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub target: CorruptionTarget,
}

fn default_b_min() -> usize {
    5
}

fn default_b_max() -> usize {
    50
}

fn default_sigma() -> f64 {
    1.0
}

impl Default for CorruptionSection {
    fn default() -> Self {
        Self {
            fraction: 0.0,
            b_min: default_b_min(),
            b_max: default_b_max(),
            sigma: default_sigma(),
            seed: None,
            target: CorruptionTarget::States,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    #[serde(default)]
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowThresMode {
    /// `row_thres` is the shrinkage parameter γ of `S₂`; rows of norm
    /// below `1/row_thres` are zeroed.
    #[default]
    Shrinkage,
    /// `row_thres` is the zeroing level itself, in derivative units.
    Level,
    /// `row_thres` is a state-sized perturbation; the level is `row_thres/dt`.
    State,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub hard_thres: f64,
    pub row_thres: f64,
    #[serde(default)]
    pub row_thres_mode: RowThresMode,
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub c_step: CStep,
    /// Refit the coefficients on the rows left undetected.
    #[serde(default)]
    pub refit: bool,
}

fn default_max_iter() -> usize {
    500
}

impl SolverSection {
    /// Row-norm zeroing level in the units of the derivative matrix.
    pub fn row_level(&self, dt: f64) -> f64 {
        match self.row_thres_mode {
            RowThresMode::Shrinkage => 1.0 / self.row_thres,
            RowThresMode::Level => self.row_thres,
            RowThresMode::State => self.row_thres / dt,
        }
    }

    pub fn solve_config(&self, dt: f64) -> SolveConfig {
        SolveConfig {
            hard_thres: self.hard_thres,
            row_thres: self.row_level(dt),
            tol: self.tol,
            max_iter: self.max_iter,
            c_step: self.c_step,
            refit: self.refit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecimationSection {
    pub factor: usize,
}

impl Default for DecimationSection {
    fn default() -> Self {
        Self { factor: 1 }
    }
}

/// Pass/fail thresholds checked after a run; absent fields are not checked.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Acceptance {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_coeff_error: Option<f64>,
    #[serde(default)]
    pub exact_detection: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg =
            Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        // A relative coefficient file is resolved against the config's folder.
        if let (Some(file), Some(dir)) = (&cfg.system.file, path.parent()) {
            if file.is_relative() {
                cfg.system.file = Some(dir.join(file));
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn corruption_seed(&self) -> u64 {
        self.corruption.seed.unwrap_or(self.seed)
    }

    /// Number of integration steps, `t_final / dt` rounded; rejected unless
    /// the ratio is an integer up to rounding.
    pub fn n_steps(&self) -> Result<usize> {
        let ratio = self.simulation.t_final / self.simulation.dt;
        let n = ratio.round();
        if n < 1.0 || (ratio - n).abs() > 4.0 * f64::EPSILON * n {
            return Err(Error::Config(format!(
                "t_final / dt = {ratio} is not a positive integer step count"
            )));
        }
        Ok(n as usize)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        match (&self.system.name, &self.system.file) {
            (Some(_), Some(_)) => return bad("give either system.name or system.file, not both".into()),
            (None, None) => return bad("system.name or system.file is required".into()),
            _ => {}
        }
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !pos(self.simulation.dt) || !pos(self.simulation.t_final) {
            return bad("simulation.dt and simulation.t_final must be positive".into());
        }
        self.n_steps()?;
        if self.decimation.factor == 0 {
            return bad("decimation.factor must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.corruption.fraction) {
            return bad(format!(
                "corruption.fraction {} is outside [0, 1)",
                self.corruption.fraction
            ));
        }
        if self.noise.sigma < 0.0 || self.corruption.sigma < 0.0 {
            return bad("noise and corruption sigma must be >= 0".into());
        }
        self.solver
            .solve_config(self.simulation.dt)
            .validate()
            .map_err(|e| Error::Config(e.to_string()))
    }
}
