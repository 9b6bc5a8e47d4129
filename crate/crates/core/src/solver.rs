//! Alternating minimization for `Φ·C + E = V` with sparse `C` and
//! row-sparse `E`.
//!
//! Each iteration runs
//!
//! ```text
//! C ← threshold(LS(V − E − b), λ)
//! E ← S₂(V − b − Φ·C, μ)           μ = 1 / row_thres
//! b ← b + Φ·C + E − V
//! ```
//!
//! and stops once `max |E_new − E_old| ≤ tol`. With `refit` set, the
//! returned coefficients are a final coefficient step on the rows left
//! with `E = 0`, fitted against `V` alone.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::LeastSquares;

/// How the coefficient step turns a least-squares fit into a sparse matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CStep {
    /// One least-squares solve over all columns, then `S_h`.
    Threshold,
    /// Least squares, `S_h`, refit on the surviving columns, repeated
    /// until the support stops changing; then a final `S_h`.
    #[default]
    Sequential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    pub hard_thres: f64,
    /// Row-norm level below which rows of `E` are set to zero, in the units
    /// of `V`.
    pub row_thres: f64,
    pub tol: f64,
    pub max_iter: usize,
    #[serde(default)]
    pub c_step: CStep,
    #[serde(default)]
    pub refit: bool,
}

impl SolveConfig {
    pub fn new(hard_thres: f64, row_thres: f64, tol: f64) -> Self {
        Self {
            hard_thres,
            row_thres,
            tol,
            max_iter: 500,
            c_step: CStep::Sequential,
            refit: false,
        }
    }

    pub fn mu(&self) -> f64 {
        1.0 / self.row_thres
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !pos(self.hard_thres) || !pos(self.row_thres) || !pos(self.tol) {
            return Err(Error::InvalidArgument(format!(
                "solver thresholds must be positive: hard_thres={}, row_thres={}, tol={}",
                self.hard_thres, self.row_thres, self.tol
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub coefficients: DMatrix<f64>,
    /// `C` of the last iteration; differs from `coefficients` only after a
    /// refit.
    pub iterate_coefficients: DMatrix<f64>,
    pub refitted: bool,
    pub outliers: DMatrix<f64>,
    pub multiplier: DMatrix<f64>,
    pub iterations: usize,
    /// `max |E^k − E^{k−1}|` per iteration.
    pub residual_history: Vec<f64>,
    /// `max |Φ·C^k + E^k − V|` per iteration.
    pub feasibility_history: Vec<f64>,
    pub detected_rows: BTreeSet<usize>,
    pub converged: bool,
}

/// `S_h(u, γ)`: keeps entries with `|u| ≥ γ`.
pub fn hard_threshold(u: &DMatrix<f64>, gamma: f64) -> DMatrix<f64> {
    u.map(|v| if v.abs() >= gamma { v } else { 0.0 })
}

/// `S₂(u_j, γ) = max(1 − 1/(γ‖u_j‖₂), 0)·u_j` applied to every row.
pub fn row_shrink(u: &DMatrix<f64>, gamma: f64) -> DMatrix<f64> {
    let mut out = u.clone();
    row_shrink_in_place(&mut out, gamma);
    out
}

fn row_shrink_in_place(u: &mut DMatrix<f64>, gamma: f64) {
    let level = 1.0 / gamma;
    for j in 0..u.nrows() {
        let norm = u.row(j).norm();
        if norm <= level {
            u.row_mut(j).fill(0.0);
        } else {
            u.row_mut(j).scale_mut(1.0 - level / norm);
        }
    }
}

fn threshold_vec(c: &mut DVector<f64>, gamma: f64) {
    c.iter_mut().filter(|v| v.abs() < gamma).for_each(|v| *v = 0.0);
}

fn support(c: &DVector<f64>) -> Vec<usize> {
    c.iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(i, _)| i)
        .collect()
}

/// Coefficient step for a right-hand side `rhs = V − E − b`.
pub fn c_step(ls: &LeastSquares, rhs: &DMatrix<f64>, lambda: f64, rule: CStep) -> Result<DMatrix<f64>> {
    let z = ls.project(rhs)?;
    let r = ls.cols();
    let all: Vec<usize> = (0..r).collect();
    let mut out = DMatrix::zeros(r, rhs.ncols());
    for l in 0..rhs.ncols() {
        let zl = z.column(l).into_owned();
        let mut c = ls.solve_projected(&zl, &all);
        threshold_vec(&mut c, lambda);
        if rule == CStep::Sequential {
            let mut sup = all.clone();
            // The support can only shrink, so at most r refits are needed.
            for _ in 0..r {
                let next = support(&c);
                if next == sup {
                    break;
                }
                sup = next;
                c = ls.solve_projected(&zl, &sup);
                threshold_vec(&mut c, lambda);
            }
        }
        out.set_column(l, &c);
    }
    Ok(out)
}

/// Least-squares solve of `Φ·C ≈ V − E − b` followed by `S_h(·, λ)`.
pub fn solve_c_step(
    phi: &DMatrix<f64>,
    v: &DMatrix<f64>,
    e: &DMatrix<f64>,
    b: &DMatrix<f64>,
    lambda: f64,
) -> Result<DMatrix<f64>> {
    let ls = LeastSquares::new(phi)?;
    ls.require_full_rank()?;
    c_step(&ls, &(v - e - b), lambda, CStep::Threshold)
}

pub fn solve(phi: &DMatrix<f64>, v: &DMatrix<f64>, cfg: &SolveConfig) -> Result<SolveReport> {
    let ls = LeastSquares::new(phi)?;
    ls.require_full_rank()?;
    solve_factored(&ls, phi, v, cfg)
}

/// [`solve`] with a factorization of `phi` computed by the caller.
pub fn solve_factored(
    ls: &LeastSquares,
    phi: &DMatrix<f64>,
    v: &DMatrix<f64>,
    cfg: &SolveConfig,
) -> Result<SolveReport> {
    cfg.validate()?;
    if phi.nrows() != v.nrows() {
        return Err(Error::DimensionMismatch {
            expected: phi.nrows(),
            got: v.nrows(),
        });
    }
    if ls.rows() != phi.nrows() || ls.cols() != phi.ncols() {
        return Err(Error::DimensionMismatch {
            expected: phi.nrows(),
            got: ls.rows(),
        });
    }
    let (m, d) = v.shape();
    let mu = cfg.mu();
    let mut e = DMatrix::<f64>::zeros(m, d);
    let mut b = DMatrix::<f64>::zeros(m, d);
    let mut c = DMatrix::<f64>::zeros(phi.ncols(), d);
    let mut residual_history = Vec::new();
    let mut feasibility_history = Vec::new();
    let mut converged = false;

    for k in 1..=cfg.max_iter {
        c = c_step(ls, &(v - &e - &b), cfg.hard_thres, cfg.c_step)?;
        let pc = phi * &c;
        let mut e_new = v - &b - &pc;
        row_shrink_in_place(&mut e_new, mu);
        let constraint = &pc + &e_new - v;
        b += &constraint;
        let change = (&e_new - &e).amax();
        e = e_new;
        if !change.is_finite() || b.iter().any(|x| !x.is_finite()) {
            return Err(Error::Diverged { iteration: k });
        }
        residual_history.push(change);
        feasibility_history.push(constraint.amax());
        if change <= cfg.tol {
            converged = true;
            break;
        }
    }

    let detected_rows: BTreeSet<usize> = (0..m).filter(|&j| e.row(j).iter().any(|x| *x != 0.0)).collect();
    let refit = if cfg.refit {
        refit_clean(phi, v, &detected_rows, cfg)?
    } else {
        None
    };
    Ok(SolveReport {
        iterations: residual_history.len(),
        refitted: refit.is_some(),
        coefficients: refit.unwrap_or_else(|| c.clone()),
        iterate_coefficients: c,
        outliers: e,
        multiplier: b,
        residual_history,
        feasibility_history,
        detected_rows,
        converged,
    })
}

// Coefficient step on the undetected rows; `None` when they do not
// determine `C`.
fn refit_clean(
    phi: &DMatrix<f64>,
    v: &DMatrix<f64>,
    detected: &BTreeSet<usize>,
    cfg: &SolveConfig,
) -> Result<Option<DMatrix<f64>>> {
    let keep: Vec<usize> = (0..phi.nrows()).filter(|j| !detected.contains(j)).collect();
    if keep.len() < phi.ncols() {
        return Ok(None);
    }
    let ls = LeastSquares::new(&phi.select_rows(&keep))?;
    if !ls.rank().full_rank() {
        return Ok(None);
    }
    c_step(&ls, &v.select_rows(&keep), cfg.hard_thres, cfg.c_step).map(Some)
}
