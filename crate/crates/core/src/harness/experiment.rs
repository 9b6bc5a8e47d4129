//! Simulation → corruption → differentiation → solve → score.

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{score, RecoveryScore};
use crate::basis::{build_dictionary, enumerate_basis};
use crate::dynamics::{integrate_rk4, named_system, PolynomialSystem, Trajectory};
use crate::error::{Error, Result};
use crate::harness::config::{Acceptance, CorruptionTarget, DerivativeMethod, ExperimentConfig};
use crate::harness::io::{load_system_file, save_system_file};
use crate::linalg::LeastSquares;
use crate::preprocess::{
    add_dense_noise, corrupt, corrupt_matrix, differentiate, stencil_outlier_rows, CorruptionRecord,
    DiffOrder,
};
use crate::solver::{solve_factored, SolveConfig, SolveReport};

pub const REPORT_FORMAT: &str = "chaosid-report/1";

/// Everything needed to build solver inputs that does not depend on the seed.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub system: PolynomialSystem,
    pub clean: Trajectory,
}

pub fn load_system(cfg: &ExperimentConfig) -> Result<PolynomialSystem> {
    match (&cfg.system.name, &cfg.system.file) {
        (Some(name), _) => named_system(*name, 2),
        (None, Some(path)) => load_system_file(path),
        (None, None) => Err(Error::Config("no system given".into())),
    }
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    cfg.validate()?;
    let system = load_system(cfg).map_err(|e| e.in_stage("system"))?;
    let x0 = match (&cfg.system.x0, &cfg.system.name) {
        (Some(x0), _) => x0.clone(),
        (None, Some(name)) => name.default_x0(),
        (None, None) => vec![1.0; system.dim()],
    };
    let n = cfg.n_steps()? + cfg.simulation.burn_in_steps;
    let traj = integrate_rk4(&system, &x0, cfg.simulation.dt, n).map_err(|e| e.in_stage("simulate"))?;
    let clean = if cfg.simulation.burn_in_steps > 0 {
        let t = traj.skip(cfg.simulation.burn_in_steps)?;
        Trajectory::new(t.states().clone(), t.dt(), 0.0)?
    } else {
        traj
    };
    Ok(Prepared { system, clean })
}

/// Solver inputs for one seed.
#[derive(Debug, Clone)]
pub struct Instance {
    pub observed: Trajectory,
    pub record: CorruptionRecord,
    pub phi: DMatrix<f64>,
    pub v: DMatrix<f64>,
    /// Trajectory sample index of each solver row.
    pub source_rows: Vec<usize>,
    pub truth: BTreeSet<usize>,
    pub c_true: DMatrix<f64>,
    pub labels: Vec<String>,
}

pub fn build_instance(cfg: &ExperimentConfig, prep: &Prepared, seed: u64) -> Result<Instance> {
    let c = &cfg.corruption;
    let stage = |s: &'static str| move |e: Error| e.in_stage(s);
    let clean = &prep.clean;
    let d = clean.dim();

    let (observed, state_record) = match c.target {
        CorruptionTarget::States => {
            corrupt(clean, c.fraction, c.b_min, c.b_max, c.sigma, seed).map_err(stage("corrupt"))?
        }
        CorruptionTarget::Derivatives => (clean.clone(), CorruptionRecord::empty(clean.len(), d, seed)),
    };
    let observed = add_dense_noise(&observed, cfg.noise.sigma, seed).map_err(stage("noise"))?;

    let (states, mut v, source_rows, stencil): (DMatrix<f64>, DMatrix<f64>, Vec<usize>, Option<DiffOrder>) =
        match cfg.derivative.method {
            DerivativeMethod::Exact => {
                let mut v = DMatrix::zeros(clean.len(), d);
                for j in 0..clean.len() {
                    let f = prep.system.eval_field(&clean.row(j))?;
                    for k in 0..d {
                        v[(j, k)] = f[k];
                    }
                }
                (observed.states().clone(), v, (0..clean.len()).collect(), None)
            }
            method => {
                let order = if method == DerivativeMethod::Central {
                    DiffOrder::Second
                } else {
                    DiffOrder::First
                };
                let est = differentiate(&observed, order).map_err(stage("differentiate"))?;
                (
                    est.aligned_states(&observed),
                    est.values.clone(),
                    est.valid_range.clone().collect(),
                    Some(order),
                )
            }
        };

    let (record, truth) = match c.target {
        CorruptionTarget::States => {
            let truth = match stencil {
                Some(order) => {
                    let est = crate::preprocess::DerivativeEstimate {
                        values: DMatrix::zeros(source_rows.len(), 0),
                        valid_range: source_rows[0]..source_rows[0] + source_rows.len(),
                        order,
                    };
                    stencil_outlier_rows(&state_record, &est)
                }
                None => state_record.covered_rows(),
            };
            (state_record, truth)
        }
        CorruptionTarget::Derivatives => {
            let (vc, rec) =
                corrupt_matrix(&v, c.fraction, c.b_min, c.b_max, c.sigma, seed).map_err(stage("corrupt"))?;
            v = vc;
            let truth = rec.covered_rows();
            (rec, truth)
        }
    };

    let basis = enumerate_basis(d, cfg.dictionary.degree)?;
    let phi = build_dictionary(&basis, &states).map_err(stage("dictionary"))?;
    let c_true = prep
        .system
        .with_degree(cfg.dictionary.degree)
        .map_err(stage("dictionary"))?
        .coefficients()
        .clone();
    Ok(Instance {
        observed,
        record,
        phi,
        v,
        source_rows,
        truth,
        c_true,
        labels: basis.labels(),
    })
}

/// One residue class of a decimated problem.
#[derive(Debug, Clone)]
pub struct Subproblem {
    pub class: usize,
    /// Rows of the full problem, ascending.
    pub rows: Vec<usize>,
    pub phi: DMatrix<f64>,
    pub v: DMatrix<f64>,
}

/// Splits rows by residue class modulo `l`. When `l` does not divide the
/// row count the first classes carry one extra row.
pub fn decimate(phi: &DMatrix<f64>, v: &DMatrix<f64>, l: usize) -> Result<Vec<Subproblem>> {
    let m = phi.nrows();
    if l == 0 {
        return Err(Error::InvalidArgument("decimation factor must be >= 1".into()));
    }
    if l > m {
        return Err(Error::InvalidArgument(format!(
            "decimation factor {l} exceeds {m} rows"
        )));
    }
    if v.nrows() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: v.nrows(),
        });
    }
    Ok((0..l)
        .map(|k| {
            let rows: Vec<usize> = (k..m).step_by(l).collect();
            Subproblem {
                class: k,
                phi: phi.select_rows(&rows),
                v: v.select_rows(&rows),
                rows,
            }
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct SolvedInstance {
    pub solve: SolveReport,
    /// Decimation class that was kept, with the rows it covers.
    pub class: Option<(usize, Vec<usize>)>,
    pub detected_rows: BTreeSet<usize>,
    pub score: RecoveryScore,
    pub class_detected_counts: Vec<usize>,
}

pub fn solve_instance(inst: &Instance, solve_cfg: &SolveConfig, l: usize) -> Result<SolvedInstance> {
    let stage = |s: &'static str| move |e: Error| e.in_stage(s);
    if l == 1 {
        let ls = LeastSquares::new(&inst.phi).map_err(stage("solve"))?;
        ls.require_full_rank().map_err(stage("solve"))?;
        let rep = solve_factored(&ls, &inst.phi, &inst.v, solve_cfg).map_err(stage("solve"))?;
        let sc = score(&inst.c_true, &rep.coefficients, &rep.detected_rows, &inst.truth)?;
        return Ok(SolvedInstance {
            detected_rows: rep.detected_rows.clone(),
            class_detected_counts: vec![rep.detected_rows.len()],
            solve: rep,
            class: None,
            score: sc,
        });
    }
    let subs = decimate(&inst.phi, &inst.v, l).map_err(stage("decimate"))?;
    let solved: Vec<(Subproblem, SolveReport)> = subs
        .into_iter()
        .map(|s| {
            let ls = LeastSquares::new(&s.phi)?;
            ls.require_full_rank()?;
            let rep = solve_factored(&ls, &s.phi, &s.v, solve_cfg)?;
            Ok((s, rep))
        })
        .collect::<Result<_>>()
        .map_err(stage("solve"))?;
    let counts: Vec<usize> = solved.iter().map(|(_, r)| r.detected_rows.len()).collect();
    // The class flagging the fewest rows is the least corrupted one; ties go
    // to the lowest class index.
    let best = (0..solved.len()).min_by_key(|&k| counts[k]).unwrap_or(0);
    let (sub, rep) = solved.into_iter().nth(best).expect("best class exists");
    let detected: BTreeSet<usize> = rep.detected_rows.iter().map(|&i| sub.rows[i]).collect();
    let class_rows: BTreeSet<usize> = sub.rows.iter().copied().collect();
    let truth: BTreeSet<usize> = inst.truth.intersection(&class_rows).copied().collect();
    let sc = score(&inst.c_true, &rep.coefficients, &detected, &truth)?;
    Ok(SolvedInstance {
        solve: rep,
        class: Some((sub.class, sub.rows)),
        detected_rows: detected,
        score: sc,
        class_detected_counts: counts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceResult {
    pub checks: Vec<Check>,
    pub passed: bool,
}

pub fn check_acceptance(acc: &Acceptance, sc: &RecoveryScore, iterations: usize) -> AcceptanceResult {
    let mut checks = Vec::new();
    if let Some(limit) = acc.max_coeff_error {
        checks.push(Check {
            name: "coefficient_error".into(),
            value: sc.coeff_error,
            limit,
            passed: sc.coeff_error <= limit,
        });
    }
    if acc.exact_detection {
        let wrong = (sc.missed_rows.len() + sc.spurious_rows.len()) as f64;
        checks.push(Check {
            name: "misclassified_rows".into(),
            value: wrong,
            limit: 0.0,
            passed: sc.outliers_exact,
        });
    }
    if let Some(limit) = acc.max_iterations {
        checks.push(Check {
            name: "iterations".into(),
            value: iterations as f64,
            limit: limit as f64,
            passed: iterations <= limit,
        });
    }
    let passed = checks.iter().all(|c| c.passed);
    AcceptanceResult { checks, passed }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub label: String,
    pub equation: usize,
    pub recovered: f64,
    #[serde(rename = "true")]
    pub truth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientBlock {
    pub labels: Vec<String>,
    /// `recovered[i][l]`: coefficient of monomial `labels[i]` in equation `l + 1`.
    pub recovered: Vec<Vec<f64>>,
    #[serde(rename = "true")]
    pub truth: Vec<Vec<f64>>,
    /// Entries nonzero in either matrix.
    pub terms: Vec<Term>,
}

impl CoefficientBlock {
    fn new(labels: &[String], rec: &DMatrix<f64>, truth: &DMatrix<f64>) -> Self {
        let rows = |m: &DMatrix<f64>| {
            (0..m.nrows())
                .map(|i| m.row(i).iter().copied().collect())
                .collect()
        };
        let mut terms = Vec::new();
        for (i, label) in labels.iter().enumerate() {
            for l in 0..rec.ncols() {
                if rec[(i, l)] != 0.0 || truth[(i, l)] != 0.0 {
                    terms.push(Term {
                        label: label.clone(),
                        equation: l + 1,
                        recovered: rec[(i, l)],
                        truth: truth[(i, l)],
                    });
                }
            }
        }
        Self {
            labels: labels.to_vec(),
            recovered: rows(rec),
            truth: rows(truth),
            terms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub samples: usize,
    pub solver_rows: usize,
    pub dictionary_columns: usize,
    pub corruption_fraction_target: f64,
    pub corruption_fraction_achieved: f64,
    pub corrupted_samples: usize,
    pub outlier_rows_true: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub iterations: usize,
    pub converged: bool,
    /// Row-norm zeroing level passed to the solver, in derivative units.
    pub row_level: f64,
    pub residual_history: Vec<f64>,
    pub feasibility_history: Vec<f64>,
    pub detected_rows: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecimationSummary {
    pub factor: usize,
    pub chosen_class: usize,
    pub detected_per_class: Vec<usize>,
}

/// Contents of `report.json`. Holds no timing, so reruns are byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub format: String,
    pub name: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub data: DataSummary,
    pub solve: SolveSummary,
    pub coefficients: CoefficientBlock,
    pub score: RecoveryScore,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decimation: Option<DecimationSummary>,
    pub acceptance: AcceptanceResult,
}

impl Report {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub report: Report,
    pub instance: Instance,
    pub solved: SolvedInstance,
    pub clean: Trajectory,
    pub seconds: f64,
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let start = Instant::now();
    let prep = prepare(cfg)?;
    let seed = cfg.corruption_seed();
    let inst = build_instance(cfg, &prep, seed)?;
    let solve_cfg = cfg.solver.solve_config(cfg.simulation.dt);
    let solved = solve_instance(&inst, &solve_cfg, cfg.decimation.factor)?;
    let acceptance = check_acceptance(&cfg.acceptance, &solved.score, solved.solve.iterations);
    let report = Report {
        format: REPORT_FORMAT.into(),
        name: cfg.name.clone(),
        seed: cfg.seed,
        config: cfg.clone(),
        data: DataSummary {
            samples: prep.clean.len(),
            solver_rows: inst.phi.nrows(),
            dictionary_columns: inst.phi.ncols(),
            corruption_fraction_target: cfg.corruption.fraction,
            corruption_fraction_achieved: inst.record.achieved_fraction(),
            corrupted_samples: inst.record.covered_rows().len(),
            outlier_rows_true: inst.truth.len(),
        },
        solve: SolveSummary {
            iterations: solved.solve.iterations,
            converged: solved.solve.converged,
            row_level: solve_cfg.row_thres,
            residual_history: solved.solve.residual_history.clone(),
            feasibility_history: solved.solve.feasibility_history.clone(),
            detected_rows: solved.detected_rows.iter().copied().collect(),
        },
        coefficients: CoefficientBlock::new(&inst.labels, &solved.solve.coefficients, &inst.c_true),
        score: solved.score.clone(),
        decimation: solved.class.as_ref().map(|(k, _)| DecimationSummary {
            factor: cfg.decimation.factor,
            chosen_class: *k,
            detected_per_class: solved.class_detected_counts.clone(),
        }),
        acceptance,
    };
    Ok(ExperimentOutcome {
        report,
        instance: inst,
        solved,
        clean: prep.clean,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Writes the report and plot-data files into `dir`:
/// `report.json`, `timing.json`, `trajectory.csv`, `observed.csv`,
/// `corruption.txt`, `residuals.csv`, `coefficients.csv`, `recovered.coef`.
pub fn write_outputs(out: &ExperimentOutcome, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("report.json"), out.report.to_json()?)?;
    std::fs::write(
        dir.join("timing.json"),
        format!("{{\n  \"wall_seconds\": {}\n}}\n", out.seconds),
    )?;
    out.clean.save_csv(&dir.join("trajectory.csv"))?;
    out.instance.observed.save_csv(&dir.join("observed.csv"))?;
    std::fs::write(dir.join("corruption.txt"), out.instance.record.to_text())?;

    let mut res = String::from("iteration,e_change,feasibility\n");
    for (k, (a, b)) in out
        .solved
        .solve
        .residual_history
        .iter()
        .zip(&out.solved.solve.feasibility_history)
        .enumerate()
    {
        res.push_str(&format!("{},{a:e},{b:e}\n", k + 1));
    }
    std::fs::write(dir.join("residuals.csv"), res)?;

    let mut coef = String::from("label,equation,true,recovered\n");
    let c = &out.solved.solve.coefficients;
    for (i, label) in out.instance.labels.iter().enumerate() {
        for l in 0..c.ncols() {
            coef.push_str(&format!(
                "{label},{},{:e},{:e}\n",
                l + 1,
                out.instance.c_true[(i, l)],
                c[(i, l)]
            ));
        }
    }
    std::fs::write(dir.join("coefficients.csv"), coef)?;

    let basis = enumerate_basis(c.ncols(), out.report.config.dictionary.degree)?;
    let recovered = PolynomialSystem::new(basis, c.clone())?;
    save_system_file(&recovered, &dir.join("recovered.coef"))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<RecoveryScore>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corruption_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialBatteryResult {
    pub n_trials: usize,
    pub n_exact_detection: usize,
    pub n_failed: usize,
    /// Extremes over trials that ran to completion.
    pub min_error: Option<f64>,
    pub max_error: Option<f64>,
    /// Largest error among trials with exact detection.
    pub max_error_exact: Option<f64>,
    pub per_trial: Vec<TrialOutcome>,
}

/// Runs `n_trials` seeds `base_seed + i` on the same clean trajectory.
/// Trials run in parallel; results are collected in seed order.
pub fn run_battery(cfg: &ExperimentConfig, n_trials: usize, base_seed: u64) -> Result<TrialBatteryResult> {
    if n_trials == 0 {
        return Err(Error::InvalidArgument("n_trials must be >= 1".into()));
    }
    let prep = Arc::new(prepare(cfg)?);
    let solve_cfg = cfg.solver.solve_config(cfg.simulation.dt);
    let per_trial: Vec<TrialOutcome> = (0..n_trials as u64)
        .into_par_iter()
        .map(|i| {
            let seed = base_seed + i;
            let run = || -> Result<(SolvedInstance, f64)> {
                let inst = build_instance(cfg, &prep, seed)?;
                let frac = inst.record.achieved_fraction();
                Ok((solve_instance(&inst, &solve_cfg, cfg.decimation.factor)?, frac))
            };
            match run() {
                Ok((s, frac)) => TrialOutcome {
                    seed,
                    iterations: Some(s.solve.iterations),
                    corruption_fraction: Some(frac),
                    score: Some(s.score),
                    error: None,
                },
                Err(e) => TrialOutcome {
                    seed,
                    score: None,
                    iterations: None,
                    corruption_fraction: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    Ok(summarize_trials(per_trial))
}

pub fn summarize_trials(per_trial: Vec<TrialOutcome>) -> TrialBatteryResult {
    let scores: Vec<&RecoveryScore> = per_trial.iter().filter_map(|t| t.score.as_ref()).collect();
    let fold = |it: &mut dyn Iterator<Item = f64>, max: bool| -> Option<f64> {
        it.fold(None, |acc: Option<f64>, e| {
            Some(match acc {
                None => e,
                Some(a) if max => a.max(e),
                Some(a) => a.min(e),
            })
        })
    };
    TrialBatteryResult {
        n_trials: per_trial.len(),
        n_exact_detection: scores.iter().filter(|s| s.outliers_exact).count(),
        n_failed: per_trial.len() - scores.len(),
        min_error: fold(&mut scores.iter().map(|s| s.coeff_error), false),
        max_error: fold(&mut scores.iter().map(|s| s.coeff_error), true),
        max_error_exact: fold(
            &mut scores.iter().filter(|s| s.outliers_exact).map(|s| s.coeff_error),
            true,
        ),
        per_trial,
    }
}
