//! Fixed-format MPS export.
//!
//! Rows are named `R0000001...` and columns `C0000001...` so every name fits
//! the 8-character fields; the original names are listed in a comment block
//! when `with_names` is set. Fixed MPS always minimizes, so a maximization
//! model is written with its objective negated.

use std::io::{self, Write};

use modcap_core::milp::{MilpModel, ObjectiveSense, RowSense};

const OBJ: &str = "OBJ";

fn row_name(i: usize) -> String {
    format!("R{:07}", i + 1)
}

fn col_name(j: usize) -> String {
    format!("C{:07}", j + 1)
}

/// Shortest rendering of `x` that fits the 12-character number fields.
pub fn number(x: f64) -> String {
    let plain = format!("{x}");
    if plain.len() <= 12 {
        return plain;
    }
    for digits in (0..=11).rev() {
        let s = format!("{x:.digits$E}");
        if s.len() <= 12 {
            return s;
        }
    }
    format!("{x:.0E}")
}

/// Data line: type in columns 2-3, names at 5 and 15, numbers at 25 and 50,
/// second name at 40.
fn line(w: &mut impl Write, kind: &str, name1: &str, name2: &str, v1: Option<f64>, pair: Option<(&str, f64)>) -> io::Result<()> {
    let mut s = format!(" {kind:<2} {name1:<8}  {name2:<8}  ");
    if let Some(v) = v1 {
        s.push_str(&format!("{:>12}", number(v)));
        if let Some((n, v)) = pair {
            s.push_str(&format!("   {n:<8}  {:>12}", number(v)));
        }
    }
    writeln!(w, "{}", s.trim_end())
}

pub fn write_mps(w: &mut impl Write, model: &MilpModel, name: &str, with_names: bool) -> io::Result<()> {
    let flip = if model.sense == ObjectiveSense::Maximize { -1.0 } else { 1.0 };
    let short: String = name.chars().filter(|c| !c.is_whitespace()).take(8).collect();
    writeln!(w, "NAME          {}", if short.is_empty() { "MODEL" } else { &short })?;
    if flip < 0.0 {
        writeln!(w, "* maximization model: objective coefficients are negated")?;
    }
    if with_names {
        for (j, v) in model.variables.iter().enumerate() {
            writeln!(w, "* {} {}", col_name(j), v.name)?;
        }
        for (i, c) in model.constraints.iter().enumerate() {
            writeln!(w, "* {} {}", row_name(i), c.name)?;
        }
    }
    writeln!(w, "ROWS")?;
    writeln!(w, " N  {OBJ}")?;
    for (i, c) in model.constraints.iter().enumerate() {
        let kind = match c.sense {
            RowSense::Le => "L",
            RowSense::Ge => "G",
            RowSense::Eq => "E",
        };
        writeln!(w, " {kind}  {}", row_name(i))?;
    }

    let mut by_col: Vec<Vec<(usize, f64)>> = vec![Vec::new(); model.num_vars()];
    for (i, c) in model.constraints.iter().enumerate() {
        for &(v, a) in &c.terms {
            if a != 0.0 {
                by_col[v.0].push((i, a));
            }
        }
    }
    writeln!(w, "COLUMNS")?;
    let mut in_int = false;
    let mut markers = 0;
    for (j, var) in model.variables.iter().enumerate() {
        if var.integer != in_int {
            let tag = if var.integer { "'INTORG'" } else { "'INTEND'" };
            writeln!(w, "    M{markers:07}  'MARKER'                 {tag}")?;
            markers += 1;
            in_int = var.integer;
        }
        let mut entries: Vec<(String, f64)> = Vec::new();
        if var.objective != 0.0 || by_col[j].is_empty() {
            entries.push((OBJ.to_string(), flip * var.objective));
        }
        entries.extend(by_col[j].iter().map(|&(i, a)| (row_name(i), a)));
        let col = col_name(j);
        for chunk in entries.chunks(2) {
            let pair = chunk.get(1).map(|(n, v)| (n.as_str(), *v));
            line(w, "", &col, &chunk[0].0, Some(chunk[0].1), pair)?;
        }
    }
    if in_int {
        writeln!(w, "    M{markers:07}  'MARKER'                 'INTEND'")?;
    }

    writeln!(w, "RHS")?;
    let rhs: Vec<(String, f64)> =
        model.constraints.iter().enumerate().filter(|(_, c)| c.rhs != 0.0).map(|(i, c)| (row_name(i), c.rhs)).collect();
    for chunk in rhs.chunks(2) {
        let pair = chunk.get(1).map(|(n, v)| (n.as_str(), *v));
        line(w, "", "RHS", &chunk[0].0, Some(chunk[0].1), pair)?;
    }

    writeln!(w, "BOUNDS")?;
    for (j, var) in model.variables.iter().enumerate() {
        let col = col_name(j);
        let (lo, hi) = (var.lower, var.upper);
        if lo == hi {
            line(w, "FX", "BND", &col, Some(lo), None)?;
            continue;
        }
        if lo == f64::NEG_INFINITY && hi == f64::INFINITY {
            line(w, "FR", "BND", &col, None, None)?;
            continue;
        }
        if lo == f64::NEG_INFINITY {
            line(w, "MI", "BND", &col, None, None)?;
        } else if lo != 0.0 || var.integer {
            line(w, "LO", "BND", &col, Some(lo), None)?;
        }
        if hi != f64::INFINITY {
            line(w, "UP", "BND", &col, Some(hi), None)?;
        } else if var.integer {
            line(w, "PL", "BND", &col, None, None)?;
        }
    }
    writeln!(w, "ENDATA")
}
