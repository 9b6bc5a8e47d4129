//! Coefficient tables.
//!
//! One term per line: monomial label, 1-based equation index, value.
//! Optional `dim N` and `degree P` lines fix the basis; otherwise the
//! dimension is the largest variable or equation index seen and the degree
//! the largest monomial degree (at least 2). `#` starts a comment.
//!
//! ```text
//! dim 3
//! degree 2
//! x1     1  -10
//! x2     1   10
//! x1*x3  2  -1
//! ```

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use crate::basis::{enumerate_basis, MultiIndex};
use crate::dynamics::PolynomialSystem;
use crate::error::{Error, Result};

// Variable indices accepted before the dimension is known.
const MAX_DIM: usize = 64;

pub fn system_to_text(sys: &PolynomialSystem) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "dim {}", sys.dim());
    let _ = writeln!(s, "degree {}", sys.basis().degree());
    for (i, idx) in sys.basis().indices().iter().enumerate() {
        for l in 0..sys.dim() {
            let v = sys.coefficients()[(i, l)];
            if v != 0.0 {
                let _ = writeln!(s, "{} {} {:e}", idx.label(), l + 1, v);
            }
        }
    }
    s
}

pub fn parse_system(text: &str, path: &Path) -> Result<PolynomialSystem> {
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut dim: Option<usize> = None;
    let mut degree: Option<u32> = None;
    let mut terms: Vec<(usize, MultiIndex, usize, f64)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields[0] {
            "dim" | "degree" => {
                let v: usize = fields
                    .get(1)
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| err(lineno, format!("`{}` needs an integer", fields[0])))?;
                if fields[0] == "dim" {
                    if v == 0 || v > MAX_DIM {
                        return Err(err(lineno, format!("dim {v} is out of range")));
                    }
                    dim = Some(v);
                } else {
                    degree = Some(v as u32);
                }
            }
            _ => {
                if fields.len() != 3 {
                    return Err(err(
                        lineno,
                        format!("expected `label equation value`, got `{line}`"),
                    ));
                }
                let idx =
                    MultiIndex::parse_label(fields[0], dim.unwrap_or(MAX_DIM)).map_err(|m| err(lineno, m))?;
                let eq: usize = fields[1]
                    .parse()
                    .map_err(|_| err(lineno, format!("bad equation index `{}`", fields[1])))?;
                if eq == 0 {
                    return Err(err(lineno, "equation indices are 1-based".into()));
                }
                let value: f64 = fields[2]
                    .parse()
                    .map_err(|_| err(lineno, format!("bad value `{}`", fields[2])))?;
                if !value.is_finite() {
                    return Err(err(lineno, format!("value `{}` is not finite", fields[2])));
                }
                terms.push((lineno, idx, eq, value));
            }
        }
    }
    let highest_var = |idx: &MultiIndex| idx.exponents().iter().rposition(|&a| a > 0).map_or(0, |p| p + 1);
    let d = match dim {
        Some(d) => d,
        None => terms
            .iter()
            .map(|(_, idx, eq, _)| highest_var(idx).max(*eq))
            .max()
            .ok_or_else(|| err(1, "no terms and no `dim` line".into()))?,
    };
    let p = degree.unwrap_or_else(|| {
        terms
            .iter()
            .map(|(_, idx, _, _)| idx.degree())
            .max()
            .unwrap_or(0)
            .max(2)
    });
    let basis = enumerate_basis(d, p)?;
    let mut c = DMatrix::zeros(basis.len(), d);
    for (lineno, idx, eq, value) in terms {
        if highest_var(&idx) > d {
            return Err(err(lineno, format!("`{idx}` uses a variable beyond dim {d}")));
        }
        if eq > d {
            return Err(err(lineno, format!("equation {eq} exceeds dim {d}")));
        }
        let trimmed = MultiIndex::new(idx.exponents()[..d].to_vec());
        let row = basis
            .position(&trimmed)
            .ok_or_else(|| err(lineno, format!("`{trimmed}` exceeds degree {p}")))?;
        c[(row, eq - 1)] += value;
    }
    PolynomialSystem::new(basis, c)
}

pub fn load_system_file(path: &Path) -> Result<PolynomialSystem> {
    let text = std::fs::read_to_string(path)?;
    parse_system(&text, path)
}

pub fn save_system_file(sys: &PolynomialSystem, path: &Path) -> Result<()> {
    std::fs::write(path, system_to_text(sys))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{named_system, SystemName};

    #[test]
    fn round_trip_named_systems() {
        for name in [SystemName::Lorenz, SystemName::Rossler, SystemName::Hyperchaos] {
            let sys = named_system(name, 4).unwrap();
            let back = parse_system(&system_to_text(&sys), Path::new("s.coef")).unwrap();
            assert_eq!(back, sys);
        }
    }

    #[test]
    fn infers_dimension_and_degree() {
        let sys = parse_system("x1 1 -1\nx2^3 2 0.5\n", Path::new("s")).unwrap();
        assert_eq!(sys.dim(), 2);
        assert_eq!(sys.basis().degree(), 3);
        assert_eq!(sys.nonzeros(), 2);
    }

    #[test]
    fn zero_variable_is_rejected_with_line() {
        match parse_system("dim 3\nx1 1 2.0\nx0 2 1.0\n", Path::new("bad.coef")) {
            Err(Error::Parse { line, msg, path }) => {
                assert_eq!(line, 3);
                assert!(msg.contains("1-based"), "{msg}");
                assert_eq!(path, Path::new("bad.coef"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn other_parse_errors() {
        for (text, line) in [
            ("dim 2\nx3 1 1.0\n", 2),
            ("dim 2\nx1 3 1.0\n", 2),
            ("dim 2\ndegree 1\nx1^2 1 1.0\n", 3),
            ("x1 1\n", 1),
            ("x1 0 1.0\n", 1),
            ("x1 1 nan\n", 1),
        ] {
            match parse_system(text, Path::new("f")) {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }
}
