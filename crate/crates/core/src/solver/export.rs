//! Export of problems in the fixed-format CPLEX LP text interchange format,
//! for cross-checking against external solvers.
//!
//! Variables are named `x{index}`, constraints `c{index}`. See the repo
//! README for the exact grammar subset emitted here.

use std::io::{self, Write};

use super::{LinearProgram, MixedIntegerProgram, Relation, Sense};

pub fn write_lp<W: Write>(lp: &LinearProgram, out: &mut W) -> io::Result<()> {
    match lp.sense {
        Sense::Maximize => writeln!(out, "Maximize")?,
        Sense::Minimize => writeln!(out, "Minimize")?,
    }
    write!(out, " obj:")?;
    if lp.objective.is_empty() {
        write!(out, " 0 x0")?;
    }
    for &(j, c) in &lp.objective {
        write_term(out, c, j)?;
    }
    writeln!(out)?;
    writeln!(out, "Subject To")?;
    for (i, row) in lp.constraints.iter().enumerate() {
        write!(out, " c{i}:")?;
        if row.coeffs.is_empty() {
            write!(out, " 0 x0")?;
        }
        for &(j, c) in &row.coeffs {
            write_term(out, c, j)?;
        }
        let rel = match row.relation {
            Relation::Le => "<=",
            Relation::Ge => ">=",
            Relation::Eq => "=",
        };
        writeln!(out, " {rel} {}", row.rhs)?;
    }
    writeln!(out, "Bounds")?;
    for (j, &(l, u)) in lp.bounds.iter().enumerate() {
        match (l.is_finite(), u.is_finite()) {
            (true, true) => writeln!(out, " {l} <= x{j} <= {u}")?,
            (true, false) => writeln!(out, " x{j} >= {l}")?,
            (false, true) => writeln!(out, " -inf <= x{j} <= {u}")?,
            (false, false) => writeln!(out, " x{j} free")?,
        }
    }
    writeln!(out, "End")?;
    Ok(())
}

pub fn write_milp<W: Write>(mip: &MixedIntegerProgram, out: &mut W) -> io::Result<()> {
    match mip.base.sense {
        Sense::Maximize => writeln!(out, "Maximize")?,
        Sense::Minimize => writeln!(out, "Minimize")?,
    }
    write!(out, " obj:")?;
    if mip.base.objective.is_empty() {
        write!(out, " 0 x0")?;
    }
    for &(j, c) in &mip.base.objective {
        write_term(out, c, j)?;
    }
    writeln!(out)?;
    writeln!(out, "Subject To")?;
    for (i, row) in mip.base.constraints.iter().enumerate() {
        write!(out, " c{i}:")?;
        if row.coeffs.is_empty() {
            write!(out, " 0 x0")?;
        }
        for &(j, c) in &row.coeffs {
            write_term(out, c, j)?;
        }
        let rel = match row.relation {
            Relation::Le => "<=",
            Relation::Ge => ">=",
            Relation::Eq => "=",
        };
        writeln!(out, " {rel} {}", row.rhs)?;
    }
    writeln!(out, "Bounds")?;
    for (j, &(l, u)) in mip.base.bounds.iter().enumerate() {
        match (l.is_finite(), u.is_finite()) {
            (true, true) => writeln!(out, " {l} <= x{j} <= {u}")?,
            (true, false) => writeln!(out, " x{j} >= {l}")?,
            (false, true) => writeln!(out, " -inf <= x{j} <= {u}")?,
            (false, false) => writeln!(out, " x{j} free")?,
        }
    }
    if !mip.integer_vars.is_empty() {
        writeln!(out, "General")?;
        for &j in &mip.integer_vars {
            writeln!(out, " x{j}")?;
        }
    }
    writeln!(out, "End")?;
    Ok(())
}

fn write_term<W: Write>(out: &mut W, c: f64, j: usize) -> io::Result<()> {
    if c >= 0.0 {
        write!(out, " + {c} x{j}")
    } else {
        write!(out, " - {} x{j}", -c)
    }
}
