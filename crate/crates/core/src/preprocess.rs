//! Finite differences, interval corruption and dense noise.
//!
//! Randomness comes from [`ChaCha8Rng`] seeded with `seed_from_u64(seed)`.
//! Each consumer uses its own stream of that generator: stream 0 draws
//! interval bandwidths and starts, stream 1 draws the interval offsets
//! (row by row, columns left to right, covered rows in ascending order) and
//! stream 2 draws dense noise in row-major order. Normals are
//! `rand_distr::StandardNormal` scaled by σ.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::ops::Range;
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::basis::build_dictionary;
use crate::dynamics::{PolynomialSystem, Trajectory};
use crate::error::{Error, Result};

pub const STREAM_INTERVALS: u64 = 0;
pub const STREAM_OFFSETS: u64 = 1;
pub const STREAM_DENSE: u64 = 2;

pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum DiffOrder {
    First,
    Second,
}

impl DiffOrder {
    pub fn as_u8(self) -> u8 {
        match self {
            DiffOrder::First => 1,
            DiffOrder::Second => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeEstimate {
    pub values: DMatrix<f64>,
    /// Source-trajectory rows at which the derivative is estimated.
    pub valid_range: Range<usize>,
    pub order: DiffOrder,
}

impl DerivativeEstimate {
    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    /// States at the rows where the derivative is estimated, for building
    /// the dictionary that pairs with these values.
    pub fn aligned_states(&self, x: &Trajectory) -> DMatrix<f64> {
        x.states()
            .rows(self.valid_range.start, self.valid_range.len())
            .into_owned()
    }

    /// Source rows read by the stencil of estimate row `i`.
    pub fn stencil(&self, i: usize) -> Range<usize> {
        match self.order {
            DiffOrder::First => i..i + 2,
            DiffOrder::Second => i..i + 3,
        }
    }
}

pub fn diff_first_order(x: &Trajectory) -> Result<DerivativeEstimate> {
    let m = x.len();
    if m < 2 {
        return Err(Error::TooShort { needed: 2, have: m });
    }
    let s = x.states();
    let v = DMatrix::from_fn(m - 1, x.dim(), |j, k| (s[(j + 1, k)] - s[(j, k)]) / x.dt());
    Ok(DerivativeEstimate {
        values: v,
        valid_range: 0..m - 1,
        order: DiffOrder::First,
    })
}

pub fn diff_second_order(x: &Trajectory) -> Result<DerivativeEstimate> {
    let m = x.len();
    if m < 3 {
        return Err(Error::TooShort { needed: 3, have: m });
    }
    let s = x.states();
    let h2 = 2.0 * x.dt();
    let v = DMatrix::from_fn(m - 2, x.dim(), |j, k| (s[(j + 2, k)] - s[(j, k)]) / h2);
    Ok(DerivativeEstimate {
        values: v,
        valid_range: 1..m - 1,
        order: DiffOrder::Second,
    })
}

pub fn differentiate(x: &Trajectory, order: DiffOrder) -> Result<DerivativeEstimate> {
    match order {
        DiffOrder::First => diff_first_order(x),
        DiffOrder::Second => diff_second_order(x),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorruptionRecord {
    pub seed: u64,
    pub rows: usize,
    pub dim: usize,
    pub fraction_target: f64,
    pub b_min: usize,
    pub b_max: usize,
    pub sigma: f64,
    /// `(start, bandwidth)` in draw order; overlaps are allowed.
    pub intervals: Vec<(usize, usize)>,
    /// Additive perturbation of each covered row, ascending by row.
    pub offsets: Vec<(usize, Vec<f64>)>,
}

impl CorruptionRecord {
    pub fn empty(rows: usize, dim: usize, seed: u64) -> Self {
        Self {
            seed,
            rows,
            dim,
            fraction_target: 0.0,
            b_min: 0,
            b_max: 0,
            sigma: 0.0,
            intervals: Vec::new(),
            offsets: Vec::new(),
        }
    }

    pub fn covered_rows(&self) -> BTreeSet<usize> {
        let mut set = BTreeSet::new();
        for &(s, b) in &self.intervals {
            set.extend(s..(s + b).min(self.rows));
        }
        set
    }

    pub fn achieved_fraction(&self) -> f64 {
        if self.rows == 0 {
            0.0
        } else {
            self.covered_rows().len() as f64 / self.rows as f64
        }
    }

    /// Dense `rows × dim` matrix Θ.
    pub fn offset_matrix(&self) -> DMatrix<f64> {
        let mut theta = DMatrix::zeros(self.rows, self.dim);
        for (j, v) in &self.offsets {
            for (k, x) in v.iter().enumerate() {
                theta[(*j, k)] = *x;
            }
        }
        theta
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# corruption record");
        let _ = writeln!(s, "seed {}", self.seed);
        let _ = writeln!(s, "rows {}", self.rows);
        let _ = writeln!(s, "dim {}", self.dim);
        let _ = writeln!(s, "fraction_target {:e}", self.fraction_target);
        let _ = writeln!(s, "achieved_fraction {:e}", self.achieved_fraction());
        let _ = writeln!(s, "bandwidth {} {}", self.b_min, self.b_max);
        let _ = writeln!(s, "sigma {:e}", self.sigma);
        let _ = writeln!(s, "intervals {}", self.intervals.len());
        for (start, b) in &self.intervals {
            let _ = writeln!(s, "interval {start} {b}");
        }
        let _ = writeln!(s, "offsets {}", self.offsets.len());
        for (j, v) in &self.offsets {
            let _ = write!(s, "offset {j}");
            for x in v {
                let _ = write!(s, " {x:e}");
            }
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let mut rec = CorruptionRecord::empty(0, 0, 0);
        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut it = line.split_whitespace();
            let key = it.next().unwrap_or_default();
            let rest: Vec<&str> = it.collect();
            let num = |idx: usize| -> Result<&str> {
                rest.get(idx)
                    .copied()
                    .ok_or_else(|| err(lineno, format!("`{key}` is missing a value")))
            };
            let uint = |idx: usize| -> Result<usize> {
                let v = num(idx)?;
                v.parse().map_err(|_| err(lineno, format!("bad integer `{v}`")))
            };
            let float = |idx: usize| -> Result<f64> {
                let v = num(idx)?;
                v.parse().map_err(|_| err(lineno, format!("bad number `{v}`")))
            };
            match key {
                "seed" => {
                    let v = num(0)?;
                    rec.seed = v.parse().map_err(|_| err(lineno, format!("bad seed `{v}`")))?;
                }
                "rows" => rec.rows = uint(0)?,
                "dim" => rec.dim = uint(0)?,
                "fraction_target" => rec.fraction_target = float(0)?,
                "achieved_fraction" | "intervals" | "offsets" => {}
                "bandwidth" => {
                    rec.b_min = uint(0)?;
                    rec.b_max = uint(1)?;
                }
                "sigma" => rec.sigma = float(0)?,
                "interval" => rec.intervals.push((uint(0)?, uint(1)?)),
                "offset" => {
                    let j = uint(0)?;
                    let vals = (1..rest.len()).map(float).collect::<Result<Vec<_>>>()?;
                    if vals.len() != rec.dim {
                        return Err(err(
                            lineno,
                            format!("offset has {} values, dim is {}", vals.len(), rec.dim),
                        ));
                    }
                    rec.offsets.push((j, vals));
                }
                other => return Err(err(lineno, format!("unknown key `{other}`"))),
            }
        }
        Ok(rec)
    }
}

/// Adds interval-structured outliers to the rows of `x`.
///
/// Bandwidths are uniform in `[b_min, b_max]` and starts uniform in
/// `[0, m - b]`, drawn until the covered-row count reaches
/// `fraction_target · m`.
pub fn corrupt_matrix(
    x: &DMatrix<f64>,
    fraction_target: f64,
    b_min: usize,
    b_max: usize,
    sigma: f64,
    seed: u64,
) -> Result<(DMatrix<f64>, CorruptionRecord)> {
    let (m, d) = x.shape();
    if !(0.0..1.0).contains(&fraction_target) {
        return Err(Error::InvalidArgument(format!(
            "corruption fraction must lie in [0, 1), got {fraction_target}"
        )));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("sigma must be >= 0, got {sigma}")));
    }
    if b_min == 0 || b_min > b_max {
        return Err(Error::InvalidArgument(format!(
            "bandwidth range [{b_min}, {b_max}] is invalid"
        )));
    }
    let mut rec = CorruptionRecord {
        seed,
        rows: m,
        dim: d,
        fraction_target,
        b_min,
        b_max,
        sigma,
        intervals: Vec::new(),
        offsets: Vec::new(),
    };
    if fraction_target == 0.0 {
        return Ok((x.clone(), rec));
    }
    if b_min > m {
        return Err(Error::FractionUnreachable {
            target: fraction_target,
            b_min,
            m,
        });
    }
    let needed = fraction_target * m as f64;
    let mut covered = vec![false; m];
    let mut count = 0usize;
    let mut rng = rng_for(seed, STREAM_INTERVALS);
    while (count as f64) < needed {
        let b = rng.random_range(b_min..=b_max.min(m));
        let start = rng.random_range(0..=m - b);
        for c in &mut covered[start..start + b] {
            if !*c {
                *c = true;
                count += 1;
            }
        }
        rec.intervals.push((start, b));
    }
    let mut rng = rng_for(seed, STREAM_OFFSETS);
    let mut out = x.clone();
    for (j, _) in covered.iter().enumerate().filter(|(_, c)| **c) {
        let mut row = Vec::with_capacity(d);
        for k in 0..d {
            let z: f64 = rng.sample(StandardNormal);
            let theta = sigma * z;
            out[(j, k)] += theta;
            row.push(theta);
        }
        rec.offsets.push((j, row));
    }
    Ok((out, rec))
}

pub fn corrupt(
    x: &Trajectory,
    fraction_target: f64,
    b_min: usize,
    b_max: usize,
    sigma: f64,
    seed: u64,
) -> Result<(Trajectory, CorruptionRecord)> {
    let (states, rec) = corrupt_matrix(x.states(), fraction_target, b_min, b_max, sigma, seed)?;
    Ok((Trajectory::new(states, x.dt(), x.t0())?, rec))
}

pub fn add_dense_noise_matrix(x: &DMatrix<f64>, sigma: f64, seed: u64) -> Result<DMatrix<f64>> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("sigma must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(x.clone());
    }
    let mut rng = rng_for(seed, STREAM_DENSE);
    let mut out = x.clone();
    for j in 0..x.nrows() {
        for k in 0..x.ncols() {
            let z: f64 = rng.sample(StandardNormal);
            out[(j, k)] += sigma * z;
        }
    }
    Ok(out)
}

pub fn add_dense_noise(x: &Trajectory, sigma: f64, seed: u64) -> Result<Trajectory> {
    let states = add_dense_noise_matrix(x.states(), sigma, seed)?;
    Trajectory::new(states, x.dt(), x.t0())
}

/// Estimate rows whose stencil reads at least one corrupted sample.
pub fn stencil_outlier_rows(record: &CorruptionRecord, est: &DerivativeEstimate) -> BTreeSet<usize> {
    let covered = record.covered_rows();
    (0..est.len())
        .filter(|&i| est.stencil(i).any(|j| covered.contains(&j)))
        .collect()
}

/// Support of `V° − Φ(X°)·C_true`, with entries counted as nonzero above
/// `1e-8` times the largest derivative magnitude (at least 1).
///
/// This is the exact outlier support when the clean derivative is exact,
/// such as for polynomial-in-time data. For finite differences of a real
/// trajectory the truncation error is far above this level; use
/// [`stencil_outlier_rows`] there.
pub fn ground_truth_outlier_rows(
    record: &CorruptionRecord,
    sys: &PolynomialSystem,
    x_corrupt: &Trajectory,
    v: &DerivativeEstimate,
) -> Result<BTreeSet<usize>> {
    if record.rows != x_corrupt.len() {
        return Err(Error::DimensionMismatch {
            expected: x_corrupt.len(),
            got: record.rows,
        });
    }
    let phi = build_dictionary(sys.basis(), &v.aligned_states(x_corrupt))?;
    let fit = phi * sys.coefficients();
    let scale = v.values.amax().max(1.0);
    let tol = 1e-8 * scale;
    Ok((0..v.len())
        .filter(|&i| (0..v.values.ncols()).any(|k| (v.values[(i, k)] - fit[(i, k)]).abs() > tol))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::enumerate_basis;
    use crate::dynamics::{integrate_rk4, named_system, SystemName};
    use proptest::prelude::*;

    fn traj_fn(f: impl Fn(f64) -> f64, dt: f64, m: usize) -> Trajectory {
        Trajectory::new(DMatrix::from_fn(m, 1, |j, _| f(j as f64 * dt)), dt, 0.0).unwrap()
    }

    #[test]
    fn first_order_examples() {
        let v = diff_first_order(&traj_fn(|t| t, 0.1, 5)).unwrap();
        assert_eq!(v.len(), 4);
        assert_eq!(v.valid_range, 0..4);
        assert!(v.values.iter().all(|x| (x - 1.0).abs() < 1e-12));
        let c = diff_first_order(&traj_fn(|_| 3.0, 0.1, 4)).unwrap();
        assert!(c.values.iter().all(|x| *x == 0.0));
        let q = diff_first_order(&traj_fn(|t| t * t, 0.1, 3)).unwrap();
        assert!((q.values[(0, 0)] - 0.1).abs() < 1e-12);
        assert!(diff_first_order(&traj_fn(|t| t, 0.1, 1)).is_err());
    }

    #[test]
    fn second_order_examples() {
        let v = diff_second_order(&traj_fn(|t| t * t, 0.1, 3)).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v.valid_range, 1..2);
        assert!((v.values[(0, 0)] - 0.2).abs() < 1e-14);
        let c = diff_second_order(&traj_fn(|_| -2.0, 0.5, 6)).unwrap();
        assert!(c.values.iter().all(|x| *x == 0.0));
        let s = diff_second_order(&traj_fn(f64::sin, 0.1, 3)).unwrap();
        assert!((s.values[(0, 0)] - 0.993347).abs() < 1e-6);
        assert!(diff_second_order(&traj_fn(|t| t, 0.1, 2)).is_err());
    }

    fn max_sin_error(order: DiffOrder, dt: f64) -> f64 {
        let m = (2.0 / dt).round() as usize + 1;
        let x = traj_fn(f64::sin, dt, m);
        let v = differentiate(&x, order).unwrap();
        v.valid_range
            .clone()
            .enumerate()
            .map(|(i, j)| (v.values[(i, 0)] - (j as f64 * dt).cos()).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn convergence_orders() {
        for dt in [0.02, 0.01, 0.005] {
            let r2 = max_sin_error(DiffOrder::Second, dt) / max_sin_error(DiffOrder::Second, dt / 2.0);
            assert!((3.6..=4.4).contains(&r2), "second order dt={dt}: {r2}");
            let r1 = max_sin_error(DiffOrder::First, dt) / max_sin_error(DiffOrder::First, dt / 2.0);
            assert!((1.8..=2.2).contains(&r1), "first order dt={dt}: {r1}");
        }
    }

    #[test]
    fn zero_fraction_is_identity() {
        let x = DMatrix::from_fn(100, 3, |j, k| (j * 3 + k) as f64);
        let (y, rec) = corrupt_matrix(&x, 0.0, 5, 50, 1.0, 9).unwrap();
        assert_eq!(y, x);
        assert!(rec.intervals.is_empty());
        assert!(rec.offsets.is_empty());
    }

    #[test]
    fn corruption_errors() {
        let x = DMatrix::zeros(10, 2);
        assert!(matches!(
            corrupt_matrix(&x, 0.2, 20, 30, 1.0, 0),
            Err(Error::FractionUnreachable { .. })
        ));
        assert!(corrupt_matrix(&x, 0.2, 2, 3, -1.0, 0).is_err());
        assert!(corrupt_matrix(&x, 1.0, 2, 3, 1.0, 0).is_err());
        assert!(corrupt_matrix(&x, 0.2, 4, 3, 1.0, 0).is_err());
        assert!(add_dense_noise_matrix(&x, -0.1, 0).is_err());
    }

    #[test]
    fn corruption_fraction_on_long_series() {
        let x = DMatrix::zeros(40000, 3);
        let (_, rec) = corrupt_matrix(&x, 0.20, 5, 50, 1.0, 0).unwrap();
        let f = rec.achieved_fraction();
        assert!((0.19..=0.21).contains(&f), "fraction {f}");
        assert!(rec
            .intervals
            .iter()
            .all(|&(s, b)| (5..=50).contains(&b) && s + b <= 40000));
    }

    #[test]
    fn dense_noise_statistics() {
        let dt = 0.0005;
        let x = DMatrix::zeros(100_000, 1);
        let y = add_dense_noise_matrix(&x, 0.4 * dt, 3).unwrap();
        let n = y.len() as f64;
        let mean = y.sum() / n;
        let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        let sd = var.sqrt();
        assert!((sd - 0.0002).abs() < 0.05 * 0.0002, "sd {sd}");
        assert_eq!(add_dense_noise_matrix(&x, 0.0, 3).unwrap(), x);
        let z = add_dense_noise_matrix(&x, 0.4 * dt, 4).unwrap();
        assert_ne!(y, z);
    }

    #[test]
    fn record_round_trip() {
        let x = DMatrix::from_element(500, 2, 1.5);
        let (_, rec) = corrupt_matrix(&x, 0.3, 5, 50, 0.7, 11).unwrap();
        let back = CorruptionRecord::parse(&rec.to_text(), Path::new("r.txt")).unwrap();
        assert_eq!(back, rec);
        match CorruptionRecord::parse("rows 3\nbogus 1\n", Path::new("r.txt")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    // Independent dilation oracle: walk each covered sample and mark the
    // estimate rows whose stencil reaches it.
    fn dilate(covered: &BTreeSet<usize>, n_est: usize, order: DiffOrder) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        for &j in covered {
            let reach: Vec<isize> = match order {
                DiffOrder::First => vec![j as isize - 1, j as isize],
                DiffOrder::Second => vec![j as isize - 2, j as isize - 1, j as isize],
            };
            for i in reach {
                if i >= 0 && (i as usize) < n_est {
                    out.insert(i as usize);
                }
            }
        }
        out
    }

    // ẋ = (1, 2t) sampled exactly: x = (t, t²), so central differences are
    // exact and the system ẋ1 = 1, ẋ2 = 2·x1 is reproduced with no residual.
    fn parabola(m: usize, dt: f64) -> (PolynomialSystem, Trajectory) {
        let basis = enumerate_basis(2, 2).unwrap();
        let mut c = DMatrix::zeros(basis.len(), 2);
        c[(0, 0)] = 1.0;
        c[(1, 1)] = 2.0;
        let sys = PolynomialSystem::new(basis, c).unwrap();
        let x = Trajectory::new(
            DMatrix::from_fn(m, 2, |j, k| {
                let t = j as f64 * dt;
                if k == 0 {
                    t
                } else {
                    t * t
                }
            }),
            dt,
            0.0,
        )
        .unwrap();
        (sys, x)
    }

    #[test]
    fn truth_rows_without_corruption_are_empty() {
        let (sys, x) = parabola(50, 0.125);
        let v = diff_second_order(&x).unwrap();
        let rec = CorruptionRecord::empty(x.len(), 2, 0);
        assert!(ground_truth_outlier_rows(&rec, &sys, &x, &v).unwrap().is_empty());
    }

    #[test]
    fn single_corrupted_row_dilates_through_stencil() {
        let (sys, x) = parabola(20, 0.125);
        let mut states = x.states().clone();
        states[(7, 0)] += 1.0;
        states[(7, 1)] -= 0.5;
        let xc = Trajectory::new(states, x.dt(), 0.0).unwrap();
        let mut rec = CorruptionRecord::empty(20, 2, 0);
        rec.intervals.push((7, 1));
        let v = diff_second_order(&xc).unwrap();
        let truth = ground_truth_outlier_rows(&rec, &sys, &xc, &v).unwrap();
        // sample 7 is estimate row 6; its neighbours are rows 5 and 7
        assert_eq!(truth, BTreeSet::from([5, 6, 7]));
        assert_eq!(stencil_outlier_rows(&rec, &v), truth);
    }

    #[test]
    fn two_intervals_give_union_of_dilations() {
        let (sys, x) = parabola(60, 0.125);
        let (xc, rec) = {
            let mut rec = CorruptionRecord::empty(60, 2, 0);
            rec.intervals = vec![(3, 4), (40, 6)];
            let mut s = x.states().clone();
            for j in rec.covered_rows() {
                s[(j, 0)] += 0.3;
                s[(j, 1)] += 0.1 * j as f64;
            }
            (Trajectory::new(s, x.dt(), 0.0).unwrap(), rec)
        };
        let v = diff_second_order(&xc).unwrap();
        let truth = ground_truth_outlier_rows(&rec, &sys, &xc, &v).unwrap();
        assert_eq!(truth, dilate(&rec.covered_rows(), v.len(), DiffOrder::Second));
    }

    #[test]
    fn lorenz_corruption_touches_only_covered_rows() {
        let l = named_system(SystemName::Lorenz, 2).unwrap();
        let x = integrate_rk4(&l, &[1.0, 1.0, 1.0], 0.001, 3000).unwrap();
        let (xc, rec) = corrupt(&x, 0.25, 5, 50, 1.0, 5).unwrap();
        let covered = rec.covered_rows();
        for j in 0..x.len() {
            let same = x.row(j) == xc.row(j);
            assert_eq!(same, !covered.contains(&j), "row {j}");
        }
        assert!((rec.offset_matrix() - (xc.states() - x.states())).amax() < 1e-12);
    }

    proptest! {
        #[test]
        fn uncovered_rows_are_untouched(
            seed in 0u64..1000,
            frac in 0.0f64..0.8,
            b_min in 1usize..8,
            extra in 0usize..10,
        ) {
            let x = DMatrix::from_fn(200, 2, |j, k| (j as f64).sin() + k as f64);
            let (y, rec) = corrupt_matrix(&x, frac, b_min, b_min + extra, 2.0, seed).unwrap();
            let covered = rec.covered_rows();
            prop_assert!(covered.len() as f64 >= frac * 200.0);
            for j in 0..200 {
                if !covered.contains(&j) {
                    prop_assert_eq!(y.row(j), x.row(j));
                }
            }
            let (y2, rec2) = corrupt_matrix(&x, frac, b_min, b_min + extra, 2.0, seed).unwrap();
            prop_assert_eq!(y2, y);
            prop_assert_eq!(rec2, rec);
        }

        #[test]
        fn central_difference_exact_on_quadratics(
            a in -10.0f64..10.0, b in -10.0f64..10.0, c in -10.0f64..10.0,
            dt in 0.01f64..0.5,
        ) {
            let x = traj_fn(|t| a + b * t + c * t * t, dt, 12);
            let v = diff_second_order(&x).unwrap();
            for (i, j) in v.valid_range.clone().enumerate() {
                let exact = b + 2.0 * c * (j as f64 * dt);
                // the differenced values carry rounding of order ε·|x|/dt
                let scale = (a.abs() + b.abs() * 6.0 + c.abs() * 36.0) / dt;
                prop_assert!((v.values[(i, 0)] - exact).abs() <= 1e-12 * scale.max(1.0));
            }
        }

        #[test]
        fn stencil_rows_match_dilation_oracle(
            intervals in proptest::collection::vec((0usize..90, 1usize..10), 0..6),
        ) {
            let mut rec = CorruptionRecord::empty(100, 1, 0);
            rec.intervals = intervals.into_iter().map(|(s, b)| (s, b.min(100 - s))).collect();
            for order in [DiffOrder::First, DiffOrder::Second] {
                let n = match order { DiffOrder::First => 99, DiffOrder::Second => 98 };
                let est = DerivativeEstimate {
                    values: DMatrix::zeros(n, 1),
                    valid_range: match order { DiffOrder::First => 0..99, DiffOrder::Second => 1..99 },
                    order,
                };
                prop_assert_eq!(stencil_outlier_rows(&rec, &est), dilate(&rec.covered_rows(), n, order));
            }
        }
    }
}
