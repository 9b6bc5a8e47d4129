//! Polynomial vector fields and fixed-step RK4 integration.

use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::basis::{enumerate_basis, MultiIndexBasis};
use crate::error::{Error, Result};

/// State-norm level at which integration is declared to have blown up.
pub const BLOW_UP_NORM: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemName {
    Lorenz,
    Rossler,
    Hyperchaos,
}

impl SystemName {
    pub fn dim(self) -> usize {
        match self {
            SystemName::Lorenz | SystemName::Rossler => 3,
            SystemName::Hyperchaos => 4,
        }
    }

    pub fn default_x0(self) -> Vec<f64> {
        match self {
            SystemName::Lorenz | SystemName::Rossler => vec![1.0, 1.0, 1.0],
            SystemName::Hyperchaos => vec![-10.0, -6.0, 0.0, 10.0],
        }
    }

    // (exponents, equation, value)
    fn terms(self) -> Vec<(Vec<u32>, usize, f64)> {
        match self {
            SystemName::Lorenz => vec![
                (vec![1, 0, 0], 0, -10.0),
                (vec![0, 1, 0], 0, 10.0),
                (vec![1, 0, 0], 1, 28.0),
                (vec![0, 1, 0], 1, -1.0),
                (vec![1, 0, 1], 1, -1.0),
                (vec![0, 0, 1], 2, -8.0 / 3.0),
                (vec![1, 1, 0], 2, 1.0),
            ],
            SystemName::Rossler => vec![
                (vec![0, 1, 0], 0, -1.0),
                (vec![0, 0, 1], 0, -1.0),
                (vec![1, 0, 0], 1, 1.0),
                (vec![0, 1, 0], 1, 0.2),
                (vec![0, 0, 0], 2, 0.2),
                (vec![0, 0, 1], 2, -5.7),
                (vec![1, 0, 1], 2, 1.0),
            ],
            SystemName::Hyperchaos => vec![
                (vec![0, 1, 0, 0], 0, -1.0),
                (vec![0, 0, 1, 0], 0, -1.0),
                (vec![1, 0, 0, 0], 1, 1.0),
                (vec![0, 1, 0, 0], 1, 0.25),
                (vec![0, 0, 0, 1], 1, 1.0),
                (vec![0, 0, 0, 0], 2, 3.0),
                (vec![1, 0, 1, 0], 2, 1.0),
                (vec![0, 0, 1, 0], 3, -0.5),
                (vec![0, 0, 0, 1], 3, 0.05),
            ],
        }
    }
}

impl fmt::Display for SystemName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SystemName::Lorenz => "lorenz",
            SystemName::Rossler => "rossler",
            SystemName::Hyperchaos => "hyperchaos",
        })
    }
}

impl FromStr for SystemName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lorenz" => Ok(SystemName::Lorenz),
            "rossler" | "rössler" => Ok(SystemName::Rossler),
            "hyperchaos" => Ok(SystemName::Hyperchaos),
            _ => Err(Error::UnknownSystem(s.to_string())),
        }
    }
}

/// `ẋ = f(x)` with `f(x) = φ(x)·C`, where `φ(x)` is the monomial row of the
/// basis and column `l` of `C` holds the coefficients of equation `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialSystem {
    basis: MultiIndexBasis,
    coefficients: DMatrix<f64>,
}

impl PolynomialSystem {
    pub fn new(basis: MultiIndexBasis, coefficients: DMatrix<f64>) -> Result<Self> {
        if coefficients.nrows() != basis.len() {
            return Err(Error::DimensionMismatch {
                expected: basis.len(),
                got: coefficients.nrows(),
            });
        }
        if coefficients.ncols() != basis.dim() {
            return Err(Error::DimensionMismatch {
                expected: basis.dim(),
                got: coefficients.ncols(),
            });
        }
        if coefficients.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "coefficient matrix has non-finite entries".into(),
            ));
        }
        Ok(Self { basis, coefficients })
    }

    pub fn basis(&self) -> &MultiIndexBasis {
        &self.basis
    }

    pub fn coefficients(&self) -> &DMatrix<f64> {
        &self.coefficients
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn nonzeros(&self) -> usize {
        self.coefficients.iter().filter(|v| **v != 0.0).count()
    }

    /// Same field re-expressed over a basis of another degree. Terms beyond
    /// the new degree must be zero.
    pub fn with_degree(&self, degree: u32) -> Result<Self> {
        let basis = enumerate_basis(self.dim(), degree)?;
        let mut c = DMatrix::zeros(basis.len(), self.dim());
        for (i, idx) in self.basis.indices().iter().enumerate() {
            let row = self.coefficients.row(i);
            if row.iter().all(|v| *v == 0.0) {
                continue;
            }
            let j = basis.position(idx).ok_or_else(|| {
                Error::InvalidArgument(format!("term {} exceeds degree {degree}", idx.label()))
            })?;
            c.set_row(j, &row);
        }
        Self::new(basis, c)
    }

    pub fn eval_field(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        let mut out = vec![0.0; self.dim()];
        self.sparse().eval(x, &mut out);
        Ok(out)
    }

    fn sparse(&self) -> SparseField {
        let mut terms = Vec::new();
        for i in 0..self.basis.len() {
            for l in 0..self.dim() {
                let c = self.coefficients[(i, l)];
                if c != 0.0 {
                    terms.push((i, l, c));
                }
            }
        }
        let monomials = self.basis.indices().to_vec();
        SparseField { terms, monomials }
    }
}

// Evaluates only the monomials that carry a nonzero coefficient. Accumulation
// runs in basis order, so results equal the dense product bit for bit.
struct SparseField {
    terms: Vec<(usize, usize, f64)>,
    monomials: Vec<crate::basis::MultiIndex>,
}

impl SparseField {
    fn eval(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut last = usize::MAX;
        let mut value = 0.0;
        for &(i, l, c) in &self.terms {
            if i != last {
                value = self.monomials[i].eval(x);
                last = i;
            }
            out[l] += value * c;
        }
    }
}

pub fn named_system(name: SystemName, basis_degree: u32) -> Result<PolynomialSystem> {
    if basis_degree < 2 {
        return Err(Error::InvalidArgument(format!(
            "named systems need basis degree >= 2, got {basis_degree}"
        )));
    }
    let basis = enumerate_basis(name.dim(), basis_degree)?;
    let mut c = DMatrix::zeros(basis.len(), name.dim());
    for (exps, eq, value) in name.terms() {
        let i = basis
            .position_of(&exps)
            .expect("named-system terms have degree <= 2");
        c[(i, eq)] = value;
    }
    PolynomialSystem::new(basis, c)
}

/// Uniformly sampled states, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    states: DMatrix<f64>,
    dt: f64,
    t0: f64,
}

impl Trajectory {
    pub fn new(states: DMatrix<f64>, dt: f64, t0: f64) -> Result<Self> {
        if states.nrows() == 0 || states.ncols() == 0 {
            return Err(Error::Empty("trajectory"));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        if !t0.is_finite() || states.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("trajectory has non-finite entries".into()));
        }
        Ok(Self { states, dt, t0 })
    }

    pub fn states(&self) -> &DMatrix<f64> {
        &self.states
    }

    pub fn into_states(self) -> DMatrix<f64> {
        self.states
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn len(&self) -> usize {
        self.states.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.states.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.states.ncols()
    }

    pub fn time(&self, j: usize) -> f64 {
        self.t0 + j as f64 * self.dt
    }

    pub fn row(&self, j: usize) -> Vec<f64> {
        self.states.row(j).iter().copied().collect()
    }

    /// Drops the first `n` samples.
    pub fn skip(&self, n: usize) -> Result<Self> {
        if n >= self.len() {
            return Err(Error::TooShort {
                needed: n + 1,
                have: self.len(),
            });
        }
        let states = self.states.rows(n, self.len() - n).into_owned();
        Self::new(states, self.dt, self.time(n))
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header = String::from("t");
        for k in 1..=self.dim() {
            header.push_str(&format!(",x{k}"));
        }
        writeln!(w, "{header}")?;
        for j in 0..self.len() {
            let mut line = format!("{:.16e}", self.time(j));
            for k in 0..self.dim() {
                line.push_str(&format!(",{:.16e}", self.states[(j, k)]));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    /// Reads a `t,x1,...,xd` file; `dt` is recovered from the time column.
    pub fn read_csv<R: BufRead>(reader: R, path: &Path) -> Result<Self> {
        let parse_err = |line: usize, msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| parse_err(1, "missing header".into()))??;
        let cols: Vec<&str> = header.trim().split(',').collect();
        if cols.len() < 2 || cols[0] != "t" {
            return Err(parse_err(
                1,
                format!("expected header t,x1,...,xd, got `{header}`"),
            ));
        }
        for (k, c) in cols[1..].iter().enumerate() {
            if *c != format!("x{}", k + 1) {
                return Err(parse_err(
                    1,
                    format!("column {} should be x{}, got `{c}`", k + 2, k + 1),
                ));
            }
        }
        let d = cols.len() - 1;
        let mut times = Vec::new();
        let mut data = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            let lineno = i + 2;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.trim().split(',').collect();
            if fields.len() != d + 1 {
                return Err(parse_err(
                    lineno,
                    format!("expected {} fields, got {}", d + 1, fields.len()),
                ));
            }
            let mut vals = Vec::with_capacity(d + 1);
            for f in fields {
                vals.push(
                    f.trim()
                        .parse::<f64>()
                        .map_err(|e| parse_err(lineno, format!("`{f}`: {e}")))?,
                );
            }
            times.push(vals[0]);
            data.extend_from_slice(&vals[1..]);
        }
        if times.len() < 2 {
            return Err(Error::TooShort {
                needed: 2,
                have: times.len(),
            });
        }
        let m = times.len();
        let dt = (times[m - 1] - times[0]) / (m - 1) as f64;
        Self::new(DMatrix::from_row_slice(m, d, &data), dt, times[0])
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(f), path)
    }
}

/// Classical fourth-order Runge-Kutta with weights (1, 2, 2, 1)/6.
pub fn integrate_rk4(sys: &PolynomialSystem, x0: &[f64], dt: f64, n_steps: usize) -> Result<Trajectory> {
    let d = sys.dim();
    if x0.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: x0.len(),
        });
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    if n_steps == 0 {
        return Err(Error::InvalidArgument("n_steps must be >= 1".into()));
    }
    let field = sys.sparse();
    let mut states = DMatrix::zeros(n_steps + 1, d);
    let mut x = x0.to_vec();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    let mut tmp = vec![0.0; d];
    for k in 0..d {
        states[(0, k)] = x[k];
    }
    for step in 1..=n_steps {
        field.eval(&x, &mut k1);
        for k in 0..d {
            tmp[k] = x[k] + 0.5 * dt * k1[k];
        }
        field.eval(&tmp, &mut k2);
        for k in 0..d {
            tmp[k] = x[k] + 0.5 * dt * k2[k];
        }
        field.eval(&tmp, &mut k3);
        for k in 0..d {
            tmp[k] = x[k] + dt * k3[k];
        }
        field.eval(&tmp, &mut k4);
        for k in 0..d {
            x[k] += dt / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k]);
        }
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() || norm > BLOW_UP_NORM {
            return Err(Error::BlowUp { step, norm });
        }
        for k in 0..d {
            states[(step, k)] = x[k];
        }
    }
    Trajectory::new(states, dt, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::build_dictionary;
    use proptest::prelude::*;

    fn decay() -> PolynomialSystem {
        let b = enumerate_basis(1, 1).unwrap();
        PolynomialSystem::new(b, DMatrix::from_column_slice(2, 1, &[0.0, -1.0])).unwrap()
    }

    #[test]
    fn named_systems_have_expected_sparsity() {
        let l = named_system(SystemName::Lorenz, 2).unwrap();
        assert_eq!(l.coefficients().shape(), (10, 3));
        assert_eq!(l.nonzeros(), 7);
        let r = named_system(SystemName::Rossler, 2).unwrap();
        assert_eq!(r.coefficients().shape(), (10, 3));
        assert_eq!(r.nonzeros(), 7);
        assert_eq!(r.coefficients()[(0, 2)], 0.2);
        let h = named_system(SystemName::Hyperchaos, 2).unwrap();
        assert_eq!(h.coefficients().shape(), (15, 4));
        assert_eq!(h.nonzeros(), 9);
        assert_eq!(
            named_system(SystemName::Lorenz, 4)
                .unwrap()
                .coefficients()
                .nrows(),
            35
        );
        assert!(named_system(SystemName::Lorenz, 1).is_err());
        assert!(matches!(
            "duffing".parse::<SystemName>(),
            Err(Error::UnknownSystem(_))
        ));
    }

    #[test]
    fn field_values() {
        let l = named_system(SystemName::Lorenz, 2).unwrap();
        let v = l.eval_field(&[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(v[0], 0.0);
        assert_eq!(v[1], 26.0);
        assert!((v[2] - (-5.0 / 3.0)).abs() < 1e-15);
        let r = named_system(SystemName::Rossler, 2).unwrap();
        assert_eq!(r.eval_field(&[0.0; 3]).unwrap(), vec![0.0, 0.0, 0.2]);
        let zero = PolynomialSystem::new(enumerate_basis(3, 2).unwrap(), DMatrix::zeros(10, 3)).unwrap();
        assert_eq!(zero.eval_field(&[3.0, -1.0, 2.0]).unwrap(), vec![0.0; 3]);
        assert!(l.eval_field(&[1.0]).is_err());
    }

    #[test]
    fn rk4_single_step_of_decay() {
        let t = integrate_rk4(&decay(), &[1.0], 0.1, 1).unwrap();
        // 1 - h + h²/2 - h³/6 + h⁴/24 at h = 0.1
        assert!((t.states()[(1, 0)] - 0.9048375).abs() < 1e-12);
        assert_eq!(t.len(), 2);
    }

    #[test]
    fn rk4_constant_field() {
        let sys = PolynomialSystem::new(enumerate_basis(2, 1).unwrap(), DMatrix::zeros(3, 2)).unwrap();
        let t = integrate_rk4(&sys, &[2.5, -7.0], 0.3, 10).unwrap();
        for j in 0..t.len() {
            assert_eq!(t.row(j), vec![2.5, -7.0]);
        }
    }

    fn decay_error(dt: f64) -> f64 {
        let n = (1.0 / dt).round() as usize;
        let t = integrate_rk4(&decay(), &[1.0], dt, n).unwrap();
        (t.states()[(n, 0)] - (-1.0f64).exp()).abs()
    }

    #[test]
    fn rk4_fourth_order() {
        for dt in [0.1, 0.05, 0.02] {
            let ratio = decay_error(dt) / decay_error(dt / 2.0);
            assert!((14.0..=18.0).contains(&ratio), "dt={dt} ratio={ratio}");
        }
    }

    #[test]
    fn lorenz_stays_on_attractor() {
        let l = named_system(SystemName::Lorenz, 2).unwrap();
        let t = integrate_rk4(&l, &[1.0, 1.0, 1.0], 0.0005, 40000).unwrap();
        assert_eq!(t.len(), 40001);
        assert!(t.states().amax() < 60.0);
    }

    #[test]
    fn blow_up_is_reported_with_step() {
        let b = enumerate_basis(1, 2).unwrap();
        let sys = PolynomialSystem::new(b, DMatrix::from_column_slice(3, 1, &[0.0, 0.0, 1.0])).unwrap();
        // ẋ = x² from x0 = 1 reaches infinity at t = 1
        match integrate_rk4(&sys, &[1.0], 0.01, 200) {
            Err(Error::BlowUp { step, .. }) => assert!(step > 90 && step < 110, "step {step}"),
            other => panic!("expected blow-up, got {other:?}"),
        }
    }

    #[test]
    fn dictionary_times_coefficients_is_field() {
        let l = named_system(SystemName::Lorenz, 4).unwrap();
        let t = integrate_rk4(&l, &[1.0, 1.0, 1.0], 0.001, 500).unwrap();
        let phi = build_dictionary(l.basis(), t.states()).unwrap();
        let v = &phi * l.coefficients();
        for j in 0..t.len() {
            let f = l.eval_field(&t.row(j)).unwrap();
            for k in 0..3 {
                assert!((v[(j, k)] - f[k]).abs() <= 1e-12 * f[k].abs().max(1.0));
            }
        }
    }

    #[test]
    fn degree_change_preserves_field() {
        let h = named_system(SystemName::Hyperchaos, 2).unwrap();
        let h4 = h.with_degree(4).unwrap();
        assert_eq!(h4.coefficients().nrows(), 70);
        assert_eq!(h4.nonzeros(), 9);
        let x = [0.3, -1.2, 2.0, 0.7];
        assert_eq!(h.eval_field(&x).unwrap(), h4.eval_field(&x).unwrap());
        let l = named_system(SystemName::Lorenz, 2).unwrap();
        let mut c = DMatrix::zeros(4, 1);
        c[(3, 0)] = 1.0;
        let cubic = PolynomialSystem::new(enumerate_basis(1, 3).unwrap(), c).unwrap();
        assert!(cubic.with_degree(2).is_err());
        assert_eq!(l.with_degree(2).unwrap(), l);
    }

    #[test]
    fn csv_round_trip() {
        let l = named_system(SystemName::Lorenz, 2).unwrap();
        let t = integrate_rk4(&l, &[1.0, 1.0, 1.0], 0.01, 50).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,x1,x2,x3\n"));
        let back = Trajectory::read_csv(&buf[..], Path::new("mem")).unwrap();
        assert_eq!(back.states(), t.states());
        assert!((back.dt() - t.dt()).abs() < 1e-15);
    }

    #[test]
    fn csv_errors_name_line() {
        let bad = b"t,x1\n0,1\n0.1,abc\n";
        match Trajectory::read_csv(&bad[..], Path::new("f.csv")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(Trajectory::read_csv(&b"time,x1\n"[..], Path::new("f")).is_err());
    }

    proptest! {
        #[test]
        fn field_is_linear_in_coefficients(
            a in proptest::collection::vec(-5.0f64..5.0, 30),
            b in proptest::collection::vec(-5.0f64..5.0, 30),
            x in proptest::collection::vec(-3.0f64..3.0, 3),
        ) {
            let basis = enumerate_basis(3, 2).unwrap();
            let ca = DMatrix::from_column_slice(10, 3, &a);
            let cb = DMatrix::from_column_slice(10, 3, &b);
            let sa = PolynomialSystem::new(basis.clone(), ca.clone()).unwrap();
            let sb = PolynomialSystem::new(basis.clone(), cb.clone()).unwrap();
            let sab = PolynomialSystem::new(basis, ca + cb).unwrap();
            let fa = sa.eval_field(&x).unwrap();
            let fb = sb.eval_field(&x).unwrap();
            let fab = sab.eval_field(&x).unwrap();
            for k in 0..3 {
                prop_assert!((fab[k] - fa[k] - fb[k]).abs() <= 1e-10 * (1.0 + fa[k].abs() + fb[k].abs()));
            }
        }
    }
}
