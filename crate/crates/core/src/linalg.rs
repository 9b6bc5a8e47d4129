//! Least-squares machinery shared by the solver and the rank checks.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Rank report of a tall matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RankInfo {
    pub rank: usize,
    pub cols: usize,
    pub singular_values: Vec<f64>,
    pub tolerance: f64,
}

impl RankInfo {
    pub fn full_rank(&self) -> bool {
        self.rank == self.cols
    }

    pub fn min_singular_value(&self) -> f64 {
        self.singular_values.last().copied().unwrap_or(0.0)
    }
}

/// Column-pivoted Householder factorization of a column-scaled matrix,
/// reusable for any right-hand side and any column subset.
///
/// With `A = Φ·diag(1/s)` and `A·P = Q·R`, the factor kept here is
/// `R̃ = R·Pᵀ`, so `A = Q·R̃` with columns of `R̃` in the original order.
/// Any subset least-squares problem `min ‖Φ_S c − y‖` then reduces to the
/// small problem `min ‖R̃_S (s_S c) − Qᵀy‖`.
pub struct LeastSquares {
    qr: nalgebra::linalg::ColPivQR<f64, nalgebra::Dyn, nalgebra::Dyn>,
    r_tilde: DMatrix<f64>,
    scales: Vec<f64>,
    rows: usize,
    rank: RankInfo,
}

impl LeastSquares {
    pub fn new(phi: &DMatrix<f64>) -> Result<Self> {
        let (m, r) = phi.shape();
        if m == 0 || r == 0 {
            return Err(Error::Empty("least-squares matrix"));
        }
        if m < r {
            return Err(Error::RankDeficient { rank: m, cols: r });
        }
        let scales: Vec<f64> = phi
            .column_iter()
            .map(|c| {
                let n = c.norm();
                if n > 0.0 {
                    n
                } else {
                    1.0
                }
            })
            .collect();
        let mut a = phi.clone();
        for (j, s) in scales.iter().enumerate() {
            a.column_mut(j).scale_mut(1.0 / s);
        }
        let qr = a.col_piv_qr();
        let mut r_tilde = qr.r();
        qr.p().inv_permute_columns(&mut r_tilde);
        let rank = rank_of_triangle(&r_tilde, m);
        Ok(Self {
            qr,
            r_tilde,
            scales,
            rows: m,
            rank,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.scales.len()
    }

    /// Rank of the scaled matrix; scaling columns does not change rank.
    pub fn rank(&self) -> &RankInfo {
        &self.rank
    }

    pub fn require_full_rank(&self) -> Result<()> {
        if self.rank.full_rank() {
            Ok(())
        } else {
            Err(Error::RankDeficient {
                rank: self.rank.rank,
                cols: self.rank.cols,
            })
        }
    }

    /// `Qᵀy` truncated to the first `r` entries of each column.
    pub fn project(&self, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if y.nrows() != self.rows {
            return Err(Error::DimensionMismatch {
                expected: self.rows,
                got: y.nrows(),
            });
        }
        let mut z = y.clone();
        self.qr.q_tr_mul(&mut z);
        Ok(z.rows(0, self.cols()).into_owned())
    }

    /// Least-squares coefficients over all columns for every column of `y`.
    pub fn solve(&self, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let z = self.project(y)?;
        let all: Vec<usize> = (0..self.cols()).collect();
        let mut out = DMatrix::zeros(self.cols(), y.ncols());
        for l in 0..y.ncols() {
            let c = self.solve_projected(&z.column(l).into_owned(), &all);
            out.set_column(l, &c);
        }
        Ok(out)
    }

    /// Least-squares fit restricted to the columns in `support`, given a
    /// projected right-hand side from [`LeastSquares::project`]. Entries
    /// outside the support are zero; coefficients are in unscaled units.
    pub fn solve_projected(&self, z: &DVector<f64>, support: &[usize]) -> DVector<f64> {
        let mut out = DVector::zeros(self.cols());
        if support.is_empty() {
            return out;
        }
        let sub = self.r_tilde.select_columns(support);
        let svd = sub.svd(true, true);
        let eps = f64::EPSILON * svd.singular_values.max() * self.cols() as f64;
        // The factor has full column rank here, so the pseudo-inverse solve
        // is the ordinary least-squares solution.
        let c = svd.solve(z, eps).expect("SVD computed with both factors");
        for (k, &j) in support.iter().enumerate() {
            out[j] = c[k] / self.scales[j];
        }
        out
    }
}

fn rank_of_triangle(r: &DMatrix<f64>, m: usize) -> RankInfo {
    let mut sv: Vec<f64> = r.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let largest = sv.first().copied().unwrap_or(0.0);
    let tolerance = m.max(r.ncols()) as f64 * f64::EPSILON * largest;
    let rank = sv.iter().filter(|&&s| s > tolerance).count();
    RankInfo {
        rank,
        cols: r.ncols(),
        singular_values: sv,
        tolerance,
    }
}

/// Rank of `a` from its pivoted factorization, without column scaling,
/// using the tolerance `max(m, r)·ε·σ_max`.
pub fn numerical_rank(a: &DMatrix<f64>) -> RankInfo {
    let (m, r) = a.shape();
    if m == 0 || r == 0 {
        return RankInfo {
            rank: 0,
            cols: r,
            singular_values: Vec::new(),
            tolerance: 0.0,
        };
    }
    let qr = a.clone().col_piv_qr();
    let rf = qr.r();
    rank_of_triangle(&rf, m)
}
