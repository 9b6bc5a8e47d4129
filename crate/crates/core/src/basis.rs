//! Monomial dictionaries.
//!
//! A [`MultiIndexBasis`] lists every exponent vector of total degree at most
//! `p` in `d` variables. Columns are graded by total degree, and within one
//! degree they are ordered lexicographically with `x1` carrying the highest
//! priority, so the degree-2 block of a 3-variable basis reads
//! `x1^2, x1*x2, x1*x3, x2^2, x2*x3, x3^2`.

use std::cmp::Ordering;
use std::fmt;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MultiIndex {
    exponents: Vec<u32>,
}

impl MultiIndex {
    pub fn new(exponents: Vec<u32>) -> Self {
        Self { exponents }
    }

    pub fn exponents(&self) -> &[u32] {
        &self.exponents
    }

    pub fn dim(&self) -> usize {
        self.exponents.len()
    }

    pub fn degree(&self) -> u32 {
        self.exponents.iter().sum()
    }

    /// Value of the monomial at `x`, by repeated multiplication.
    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut acc = 1.0;
        for (&xi, &a) in x.iter().zip(&self.exponents) {
            for _ in 0..a {
                acc *= xi;
            }
        }
        acc
    }

    /// Graded order: total degree first, then larger exponent of the
    /// lowest-numbered variable first.
    pub fn graded_cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| other.exponents.cmp(&self.exponents))
    }

    /// Human-readable label such as `1`, `x2`, `x1*x3` or `x3^4`.
    pub fn label(&self) -> String {
        let parts: Vec<String> = self
            .exponents
            .iter()
            .enumerate()
            .filter(|(_, &a)| a > 0)
            .map(|(i, &a)| {
                if a == 1 {
                    format!("x{}", i + 1)
                } else {
                    format!("x{}^{}", i + 1, a)
                }
            })
            .collect();
        if parts.is_empty() {
            "1".to_string()
        } else {
            parts.join("*")
        }
    }

    /// Parses a label produced by [`MultiIndex::label`]. Repeated factors
    /// (`x1*x1`) are accumulated. Variables are 1-based.
    pub fn parse_label(label: &str, dim: usize) -> std::result::Result<Self, String> {
        let label = label.trim();
        let mut exponents = vec![0u32; dim];
        if label == "1" {
            return Ok(Self { exponents });
        }
        if label.is_empty() {
            return Err("empty monomial label".into());
        }
        for factor in label.split('*') {
            let factor = factor.trim();
            let rest = factor
                .strip_prefix('x')
                .ok_or_else(|| format!("factor `{factor}` does not start with `x`"))?;
            let (var, exp) = match rest.split_once('^') {
                Some((v, e)) => (
                    v,
                    e.parse::<u32>()
                        .map_err(|_| format!("bad exponent in `{factor}`"))?,
                ),
                None => (rest, 1),
            };
            let var: usize = var
                .parse()
                .map_err(|_| format!("bad variable index in `{factor}`"))?;
            if var == 0 {
                return Err(format!(
                    "variable index in `{factor}` is 0; variables are 1-based"
                ));
            }
            if var > dim {
                return Err(format!("variable x{var} exceeds dimension {dim}"));
            }
            exponents[var - 1] += exp;
        }
        Ok(Self { exponents })
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiIndexBasis {
    dim: usize,
    degree: u32,
    indices: Vec<MultiIndex>,
}

impl MultiIndexBasis {
    pub fn new(dim: usize, degree: u32) -> Result<Self> {
        enumerate_basis(dim, degree)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    pub fn position(&self, index: &MultiIndex) -> Option<usize> {
        self.indices
            .binary_search_by(|probe| probe.graded_cmp(index))
            .ok()
    }

    /// Column position of the monomial with the given exponents.
    pub fn position_of(&self, exponents: &[u32]) -> Option<usize> {
        if exponents.len() != self.dim {
            return None;
        }
        self.position(&MultiIndex::new(exponents.to_vec()))
    }

    pub fn labels(&self) -> Vec<String> {
        self.indices.iter().map(MultiIndex::label).collect()
    }
}

/// Number of monomials of degree at most `p` in `d` variables, `C(p+d, d)`.
pub fn basis_size(d: usize, p: u32) -> Result<usize> {
    if d == 0 {
        return Err(Error::InvalidArgument("basis dimension must be >= 1".into()));
    }
    let n = (p as usize)
        .checked_add(d)
        .ok_or(Error::Overflow { n: usize::MAX, k: d })?;
    binomial(n, d)
}

fn binomial(n: usize, k: usize) -> Result<usize> {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) / (i + 1) is exact at every step
        acc = acc.checked_mul((n - i) as u128).ok_or(Error::Overflow { n, k })? / (i as u128 + 1);
    }
    usize::try_from(acc).map_err(|_| Error::Overflow { n, k })
}

pub fn enumerate_basis(d: usize, p: u32) -> Result<MultiIndexBasis> {
    let r = basis_size(d, p)?;
    let mut indices = Vec::with_capacity(r);
    let mut current = vec![0u32; d];
    for k in 0..=p {
        push_degree(&mut indices, &mut current, 0, k);
    }
    debug_assert_eq!(indices.len(), r);
    Ok(MultiIndexBasis {
        dim: d,
        degree: p,
        indices,
    })
}

// Emits every exponent vector with the remaining `left` degree spread over
// positions `pos..`, highest exponent of the earliest variable first.
fn push_degree(out: &mut Vec<MultiIndex>, current: &mut [u32], pos: usize, left: u32) {
    if pos + 1 == current.len() {
        current[pos] = left;
        out.push(MultiIndex::new(current.to_vec()));
        current[pos] = 0;
        return;
    }
    for a in (0..=left).rev() {
        current[pos] = a;
        push_degree(out, current, pos + 1, left - a);
    }
    current[pos] = 0;
}

pub fn evaluate_monomials(basis: &MultiIndexBasis, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != basis.dim {
        return Err(Error::DimensionMismatch {
            expected: basis.dim,
            got: x.len(),
        });
    }
    Ok(basis.indices.iter().map(|idx| idx.eval(x)).collect())
}

/// Dictionary matrix with one row per state (row of `states`) and one column
/// per basis monomial.
pub fn build_dictionary(basis: &MultiIndexBasis, states: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if states.ncols() != basis.dim {
        return Err(Error::DimensionMismatch {
            expected: basis.dim,
            got: states.ncols(),
        });
    }
    let m = states.nrows();
    if m == 0 {
        return Err(Error::Empty("trajectory has no samples"));
    }
    let r = basis.len();
    let mut phi = DMatrix::<f64>::zeros(m, r);
    // Column-major storage: each column is a contiguous slice and is filled
    // independently, so the parallel result equals the sequential one.
    phi.as_mut_slice()
        .par_chunks_mut(m)
        .zip(basis.indices.par_iter())
        .for_each(|(col, idx)| {
            let mut x = vec![0.0; basis.dim];
            for (j, out) in col.iter_mut().enumerate() {
                for (k, xk) in x.iter_mut().enumerate() {
                    *xk = states[(j, k)];
                }
                *out = idx.eval(&x);
            }
        });
    Ok(phi)
}
