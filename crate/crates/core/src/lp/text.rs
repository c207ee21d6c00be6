//! Plain-text LP format for exchanging stage instances with other solvers.
//!
//! ```text
//! \ stage LP: 2 variables, 2 rows
//! minimize: 1.0*w_1 + 0.5*w_2
//! subject to:
//! row_1: 0.5*w_1 + 0.25*w_2 >= 1.0
//! row_2: 1.0*w_1 + -2.0*w_2 >= 0.4
//! free: w_1 w_2
//! end
//! ```
//!
//! Every coefficient is written, zeros included, in Rust's shortest
//! round-trip float syntax, so import followed by export reproduces the
//! input byte for byte.

use std::fmt::Write;

use super::LpInstance;
use crate::error::{Error, Result};

fn sum_terms(out: &mut String, coeffs: &[f64]) {
    for (i, v) in coeffs.iter().enumerate() {
        if i > 0 {
            out.push_str(" + ");
        }
        let _ = write!(out, "{v:?}*w_{}", i + 1);
    }
}

pub fn export(lp: &LpInstance) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "\\ stage LP: {} variables, {} rows",
        lp.num_vars(),
        lp.num_rows()
    );
    out.push_str("minimize: ");
    sum_terms(&mut out, lp.c());
    out.push_str("\nsubject to:\n");
    for (s, (row, b)) in lp.rows().zip(lp.b()).enumerate() {
        let _ = write!(out, "row_{}: ", s + 1);
        sum_terms(&mut out, row);
        let _ = writeln!(out, " >= {b:?}");
    }
    out.push_str("free:");
    for i in 0..lp.num_vars() {
        let _ = write!(out, " w_{}", i + 1);
    }
    out.push_str("\nend\n");
    out
}

fn perr(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_terms(line: usize, text: &str) -> Result<Vec<f64>> {
    let mut coeffs = Vec::new();
    for (i, term) in text.split(" + ").enumerate() {
        let (coeff, var) = term
            .split_once('*')
            .ok_or_else(|| perr(line, format!("term `{term}` is not coeff*w_i")))?;
        if var != format!("w_{}", i + 1) {
            return Err(perr(line, format!("expected w_{}, found `{var}`", i + 1)));
        }
        let v: f64 = coeff
            .parse()
            .map_err(|_| perr(line, format!("bad coefficient `{coeff}`")))?;
        coeffs.push(v);
    }
    Ok(coeffs)
}

pub fn import(text: &str) -> Result<LpInstance> {
    let mut c: Option<Vec<f64>> = None;
    let mut phi = Vec::new();
    let mut b = Vec::new();
    let mut in_rows = false;
    let mut ended = false;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.starts_with('\\') || raw.trim().is_empty() {
            continue;
        }
        if ended {
            return Err(perr(line, "content after `end`"));
        }
        if let Some(rest) = raw.strip_prefix("minimize: ") {
            c = Some(parse_terms(line, rest)?);
        } else if raw == "subject to:" {
            in_rows = true;
        } else if raw.starts_with("free:") {
            in_rows = false;
        } else if raw == "end" {
            ended = true;
        } else if in_rows {
            let (label, body) = raw
                .split_once(": ")
                .ok_or_else(|| perr(line, "constraint line lacks a label"))?;
            if label != format!("row_{}", b.len() + 1) {
                return Err(perr(line, format!("expected row_{}, found `{label}`", b.len() + 1)));
            }
            let (lhs, rhs) = body
                .rsplit_once(" >= ")
                .ok_or_else(|| perr(line, "constraint lacks `>=`"))?;
            let row = parse_terms(line, lhs)?;
            let m = c.as_ref().map_or(0, Vec::len);
            if row.len() != m {
                return Err(perr(line, format!("row has {} terms, objective has {m}", row.len())));
            }
            phi.extend(row);
            b.push(
                rhs.parse::<f64>()
                    .map_err(|_| perr(line, format!("bad right-hand side `{rhs}`")))?,
            );
        } else {
            return Err(perr(line, format!("unrecognized line `{raw}`")));
        }
    }
    if !ended {
        return Err(perr(text.lines().count(), "missing `end`"));
    }
    let c = c.ok_or_else(|| perr(0, "missing objective"))?;
    LpInstance::new(c, phi, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn documented_example_parses() {
        let text = "\\ stage LP: 2 variables, 2 rows\nminimize: 1.0*w_1 + 0.5*w_2\nsubject to:\nrow_1: 0.5*w_1 + 0.25*w_2 >= 1.0\nrow_2: 1.0*w_1 + -2.0*w_2 >= 0.4\nfree: w_1 w_2\nend\n";
        let lp = import(text).unwrap();
        assert_eq!(lp.c(), &[1.0, 0.5]);
        assert_eq!(lp.row(1), &[1.0, -2.0]);
        assert_eq!(lp.b(), &[1.0, 0.4]);
        assert_eq!(export(&lp), text);
    }

    #[test]
    fn malformed_input_reports_line() {
        let text = "minimize: 1.0*w_1\nsubject to:\nrow_1: 1.0*w_2 >= 1.0\nend\n";
        match import(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(import("minimize: 1.0*w_1\n").is_err());
    }
}
