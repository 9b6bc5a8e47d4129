//! Named experiment configurations.

use serde::{Deserialize, Serialize};

use crate::dynamics::SystemName;
use crate::error::{Error, Result};
use crate::harness::config::*;
use crate::solver::CStep;

pub const PRESET_NAMES: &[&str] = &[
    "lorenz-20",
    "lorenz-50",
    "lorenz-short-22",
    "lorenz-short-72",
    "lorenz-100",
    "rossler-10",
    "rossler-20",
    "rossler-40",
    "hyperchaos-10",
    "table-1",
];

struct Params {
    system: SystemName,
    dt: f64,
    t_final: f64,
    fraction: f64,
    hard_thres: f64,
    row_thres: f64,
    tol: f64,
    acceptance: Acceptance,
}

fn build(name: &str, s: Params) -> ExperimentConfig {
    ExperimentConfig {
        name: name.to_string(),
        seed: 0,
        system: SystemSection {
            name: Some(s.system),
            file: None,
            x0: None,
        },
        simulation: SimulationSection {
            dt: s.dt,
            t_final: s.t_final,
            burn_in_steps: 0,
        },
        dictionary: DictionarySection { degree: 4 },
        derivative: DerivativeSection::default(),
        corruption: CorruptionSection {
            fraction: s.fraction,
            ..CorruptionSection::default()
        },
        noise: NoiseSection::default(),
        solver: SolverSection {
            hard_thres: s.hard_thres,
            row_thres: s.row_thres,
            row_thres_mode: RowThresMode::Shrinkage,
            tol: s.tol,
            max_iter: 500,
            c_step: CStep::Sequential,
            refit: true,
        },
        decimation: DecimationSection::default(),
        acceptance: s.acceptance,
        output_dir: None,
    }
}

fn acc(max_err: f64, max_iter: Option<usize>) -> Acceptance {
    Acceptance {
        max_coeff_error: Some(max_err),
        exact_detection: true,
        max_iterations: max_iter,
    }
}

fn lorenz(dt: f64, t_final: f64, fraction: f64, tol: f64, acceptance: Acceptance) -> Params {
    Params {
        system: SystemName::Lorenz,
        dt,
        t_final,
        fraction,
        hard_thres: 0.1,
        row_thres: 0.0125,
        tol,
        acceptance,
    }
}

fn rossler(fraction: f64, max_err: f64) -> Params {
    Params {
        system: SystemName::Rossler,
        dt: 0.0005,
        t_final: 50.0,
        fraction,
        hard_thres: 0.05,
        row_thres: 0.025,
        tol: 1e-5,
        acceptance: acc(max_err, None),
    }
}

/// Single-run preset by name. `table-1` returns the configuration of one
/// battery trial without dense noise; see [`battery_preset`].
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let params = match name {
        "lorenz-20" | "table-1" => lorenz(0.0005, 20.0, 0.20, 0.005, acc(5e-4, Some(60))),
        "lorenz-50" => lorenz(0.0005, 20.0, 0.50, 0.005, acc(5e-4, Some(80))),
        "lorenz-short-22" => lorenz(0.0005, 2.5, 0.22, 0.005, acc(2e-3, None)),
        "lorenz-short-72" => lorenz(0.0005, 2.5, 0.72, 0.005, acc(2e-3, None)),
        "lorenz-100" => lorenz(0.0005, 100.0, 0.20, 0.01, acc(5e-4, None)),
        "rossler-10" => rossler(0.10, 0.012),
        "rossler-20" => rossler(0.20, 0.025),
        "rossler-40" => rossler(0.40, 0.04),
        "hyperchaos-10" => Params {
            system: SystemName::Hyperchaos,
            dt: 0.001,
            t_final: 100.0,
            fraction: 0.10,
            hard_thres: 0.01,
            row_thres: 0.0125,
            tol: 1e-5,
            acceptance: acc(1e-3, None),
        },
        other => {
            return Err(Error::Config(format!(
                "unknown preset `{other}`; known: {}",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    let mut cfg = build(name, params);
    if name == "table-1" {
        cfg.acceptance = Acceptance::default();
    }
    Ok(cfg)
}

/// Pass criteria of a trial battery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryAcceptance {
    pub min_exact: Option<usize>,
    /// Bound on the largest coefficient error over all trials.
    pub max_error: Option<f64>,
}

impl BatteryAcceptance {
    pub fn passed(&self, n_exact: usize, max_error: Option<f64>) -> bool {
        self.min_exact.is_none_or(|k| n_exact >= k)
            && self
                .max_error
                .is_none_or(|lim| max_error.is_some_and(|e| e <= lim))
    }
}

/// The dense-noise battery: `table-1` with noise σ = `noise_mult · dt`.
/// Thresholds exist for the multipliers 0.4 and 0.8 at 100 trials.
pub fn battery_preset(
    name: &str,
    noise_mult: f64,
    n_trials: usize,
) -> Result<(ExperimentConfig, BatteryAcceptance)> {
    if name != "table-1" {
        return Err(Error::Config(format!(
            "`{name}` is not a battery preset; use table-1"
        )));
    }
    if !(noise_mult >= 0.0 && noise_mult.is_finite()) {
        return Err(Error::Config(format!(
            "noise multiplier {noise_mult} must be >= 0"
        )));
    }
    let mut cfg = preset(name)?;
    cfg.noise.sigma = noise_mult * cfg.simulation.dt;
    let scale = |k: usize| (k * n_trials).div_ceil(100);
    let acceptance = if (noise_mult - 0.4).abs() < 1e-12 {
        BatteryAcceptance {
            min_exact: Some(scale(80)),
            max_error: Some(2e-3),
        }
    } else if (noise_mult - 0.8).abs() < 1e-12 {
        BatteryAcceptance {
            min_exact: Some(scale(50)),
            max_error: None,
        }
    } else {
        BatteryAcceptance {
            min_exact: None,
            max_error: None,
        }
    };
    Ok((cfg, acceptance))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_validates() {
        for name in PRESET_NAMES {
            let cfg = preset(name).unwrap();
            cfg.validate().unwrap();
            let text = cfg.to_toml_string().unwrap();
            assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);
        }
        assert!(preset("lorenz-7").is_err());
    }

    #[test]
    fn step_counts() {
        assert_eq!(preset("lorenz-20").unwrap().n_steps().unwrap(), 40_000);
        assert_eq!(preset("lorenz-short-72").unwrap().n_steps().unwrap(), 5_000);
        assert_eq!(preset("lorenz-100").unwrap().n_steps().unwrap(), 200_000);
        assert_eq!(preset("rossler-40").unwrap().n_steps().unwrap(), 100_000);
        assert_eq!(preset("hyperchaos-10").unwrap().n_steps().unwrap(), 100_000);
    }

    #[test]
    fn battery_thresholds() {
        let (cfg, a) = battery_preset("table-1", 0.4, 100).unwrap();
        assert!((cfg.noise.sigma - 0.0002).abs() < 1e-15);
        assert_eq!(a.min_exact, Some(80));
        assert!(a.passed(80, Some(0.001)));
        assert!(!a.passed(79, Some(0.001)));
        assert!(!a.passed(90, Some(0.003)));
        let (_, b) = battery_preset("table-1", 0.8, 10).unwrap();
        assert_eq!(b.min_exact, Some(5));
        assert!(battery_preset("lorenz-20", 0.4, 10).is_err());
    }
}
