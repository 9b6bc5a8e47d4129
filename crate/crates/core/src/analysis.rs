//! Recovery scores and small-instance oracles.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{numerical_rank, LeastSquares};
use crate::solver::{solve, SolveConfig, SolveReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryScore {
    pub coeff_error: f64,
    pub outliers_exact: bool,
    pub missed_rows: BTreeSet<usize>,
    pub spurious_rows: BTreeSet<usize>,
    pub per_equation_errors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Detection {
    pub missed: BTreeSet<usize>,
    pub spurious: BTreeSet<usize>,
}

impl Detection {
    pub fn exact(&self) -> bool {
        self.missed.is_empty() && self.spurious.is_empty()
    }
}

fn check_shapes(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::InvalidArgument(format!(
            "coefficient shapes differ: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

fn error_over<'a>(pairs: impl Iterator<Item = (&'a f64, &'a f64)>) -> f64 {
    let mut rel: f64 = 0.0;
    let mut spurious: f64 = 0.0;
    for (t, r) in pairs {
        if *t != 0.0 {
            rel = rel.max(((r - t) / t).abs());
        } else if *r != 0.0 {
            spurious = spurious.max(r.abs());
        }
    }
    rel.max(spurious)
}

/// Largest relative error over the true nonzero coefficients, or the largest
/// magnitude of a coefficient that should be zero, whichever is bigger.
pub fn coefficient_error(c_true: &DMatrix<f64>, c_rec: &DMatrix<f64>) -> Result<f64> {
    check_shapes(c_true, c_rec)?;
    Ok(error_over(c_true.iter().zip(c_rec.iter())))
}

/// [`coefficient_error`] restricted to each equation (column).
pub fn per_equation_errors(c_true: &DMatrix<f64>, c_rec: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_shapes(c_true, c_rec)?;
    Ok((0..c_true.ncols())
        .map(|l| error_over(c_true.column(l).iter().zip(c_rec.column(l).iter())))
        .collect())
}

pub fn score_detection(detected: &BTreeSet<usize>, truth: &BTreeSet<usize>) -> Detection {
    Detection {
        missed: truth.difference(detected).copied().collect(),
        spurious: detected.difference(truth).copied().collect(),
    }
}

pub fn score(
    c_true: &DMatrix<f64>,
    c_rec: &DMatrix<f64>,
    detected: &BTreeSet<usize>,
    truth: &BTreeSet<usize>,
) -> Result<RecoveryScore> {
    let det = score_detection(detected, truth);
    Ok(RecoveryScore {
        coeff_error: coefficient_error(c_true, c_rec)?,
        outliers_exact: det.exact(),
        missed_rows: det.missed,
        spurious_rows: det.spurious,
        per_equation_errors: per_equation_errors(c_true, c_rec)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FullRankCheck {
    pub full_rank: bool,
    pub rank: usize,
    pub min_singular_value: f64,
}

/// Rank of Φ with tolerance `max(m', r)·ε·σ_max`.
pub fn check_full_rank(phi: &DMatrix<f64>) -> Result<FullRankCheck> {
    if phi.nrows() < phi.ncols() {
        return Err(Error::InvalidArgument(format!(
            "rank check needs at least as many rows as columns, got {}x{}",
            phi.nrows(),
            phi.ncols()
        )));
    }
    let info = numerical_rank(phi);
    Ok(FullRankCheck {
        full_rank: info.full_rank(),
        rank: info.rank,
        min_singular_value: info.min_singular_value(),
    })
}

/// `rows × cols` matrix of standard normals from ChaCha8 seeded with `seed`,
/// filled column by column.
pub fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<f64> = (0..rows * cols)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    DMatrix::from_vec(rows, cols, data)
}

pub const NSP_MAX_ROWS: usize = 12;
pub const NSP_MAX_COLS: usize = 4;
const NSP_GRID: i32 = 6;
const NSP_RANDOM_DRAWS: usize = 10_000;

/// Partial null-space test: is `‖v_S‖₁ < ½‖v‖₁` for every `v = A·w ≠ 0` and
/// every row subset `|S| = s`?
///
/// `w` ranges over the nonzero points of the integer grid `[-6, 6]^r` and
/// 10⁴ Gaussian directions (ChaCha8, seed 0). For a given `v` the worst
/// subset holds its `s` largest magnitudes, so that sum stands in for the
/// search over subsets. Near-ties (within 1e-12 relative) count as
/// violations. A `false` answer is a proof; `true` is strong evidence.
pub fn check_partial_nsp(a: &DMatrix<f64>, s: usize) -> Result<bool> {
    let (l, r) = a.shape();
    if l > NSP_MAX_ROWS || r > NSP_MAX_COLS || r == 0 {
        return Err(Error::SizeLimit(format!(
            "partial NSP check supports up to {NSP_MAX_ROWS}x{NSP_MAX_COLS}, got {l}x{r}"
        )));
    }
    if s > l {
        return Err(Error::InvalidArgument(format!("sparsity {s} exceeds {l} rows")));
    }
    if l < r || !numerical_rank(a).full_rank() {
        return Ok(false);
    }
    if s == 0 {
        return Ok(true);
    }

    let violates = |w: &DVector<f64>| -> bool {
        let v = a * w;
        let mut mags: Vec<f64> = v.iter().map(|x| x.abs()).collect();
        let total: f64 = mags.iter().sum();
        mags.sort_by(|x, y| y.total_cmp(x));
        let top: f64 = mags[..s].iter().sum();
        top >= 0.5 * total * (1.0 - 1e-12)
    };

    let side = (2 * NSP_GRID + 1) as usize;
    let mut w = DVector::zeros(r);
    for code in 0..side.pow(r as u32) {
        let mut c = code;
        for k in 0..r {
            w[k] = (c % side) as f64 - NSP_GRID as f64;
            c /= side;
        }
        let n = w.norm();
        if n == 0.0 {
            continue;
        }
        if violates(&(&w / n)) {
            return Ok(false);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..NSP_RANDOM_DRAWS {
        for k in 0..r {
            w[k] = StandardNormal.sample(&mut rng);
        }
        let n = w.norm();
        if n > 0.0 && violates(&(&w / n)) {
            return Ok(false);
        }
    }
    Ok(true)
}

pub const ORACLE_MAX_ROWS: usize = 40;
pub const ORACLE_MAX_SPARSITY: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct L1Minimizer {
    pub coefficients: DMatrix<f64>,
    pub outliers: DMatrix<f64>,
    pub support: Vec<usize>,
    pub objective: f64,
}

// Advances `idx` to the next k-subset of 0..n in lexicographic order.
fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    for i in (0..k).rev() {
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Minimizer of `‖E‖₁` subject to `Φ·C + E = V` among outlier supports of
/// size at most `s`, found by enumerating every support, fitting the
/// complement rows by least squares and keeping the fits that interpolate
/// them exactly. Ties, up to `1e-9·max(1, ‖V‖∞)`, go to the first support in
/// (size, lexicographic) order.
pub fn l1_oracle(phi: &DMatrix<f64>, v: &DMatrix<f64>, s: usize) -> Result<L1Minimizer> {
    let (m, r) = phi.shape();
    if m > ORACLE_MAX_ROWS || s > ORACLE_MAX_SPARSITY || v.ncols() != 1 {
        return Err(Error::SizeLimit(format!(
            "oracle supports m' <= {ORACLE_MAX_ROWS}, s <= {ORACLE_MAX_SPARSITY}, d = 1; got m'={m}, s={s}, d={}",
            v.ncols()
        )));
    }
    if v.nrows() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: v.nrows(),
        });
    }
    let scale = v.amax().max(1.0);
    let mut best: Option<L1Minimizer> = None;
    for size in 0..=s.min(m.saturating_sub(r)) {
        let mut idx: Vec<usize> = (0..size).collect();
        loop {
            let keep: Vec<usize> = (0..m).filter(|j| !idx.contains(j)).collect();
            let sub = phi.select_rows(&keep);
            if let Ok(ls) = LeastSquares::new(&sub) {
                if ls.rank().full_rank() {
                    let c = ls.solve(&v.select_rows(&keep))?;
                    let mut e = v - phi * &c;
                    let fits = keep.iter().all(|&j| e[(j, 0)].abs() <= 1e-9 * scale);
                    if fits {
                        for &j in &keep {
                            e[(j, 0)] = 0.0;
                        }
                        let objective = e.iter().map(|x| x.abs()).sum();
                        // Supersets of an exact fit reproduce it up to rounding; only
                        // a clear improvement displaces an earlier support.
                        if best
                            .as_ref()
                            .is_none_or(|b| objective < b.objective - 1e-9 * scale)
                        {
                            best = Some(L1Minimizer {
                                coefficients: c,
                                outliers: e,
                                support: idx.clone(),
                                objective,
                            });
                        }
                    }
                }
            }
            if size == 0 || !next_combination(&mut idx, m) {
                break;
            }
        }
    }
    best.ok_or(Error::NoFeasibleSupport(s))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleComparison {
    pub oracle: L1Minimizer,
    pub solver: SolveReport,
    pub matched: bool,
}

/// Runs the main solver and the enumeration oracle on the same instance and
/// reports whether `(C, E)` agree to 1e-6.
pub fn l1_oracle_equivalence(
    phi: &DMatrix<f64>,
    v: &DMatrix<f64>,
    s: usize,
    cfg: &SolveConfig,
) -> Result<OracleComparison> {
    let oracle = l1_oracle(phi, v, s)?;
    let solver = solve(phi, v, cfg)?;
    let matched = (&solver.coefficients - &oracle.coefficients).amax() <= 1e-6
        && (&solver.outliers - &oracle.outliers).amax() <= 1e-6;
    Ok(OracleComparison {
        oracle,
        solver,
        matched,
    })
}
