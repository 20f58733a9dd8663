//! CPLEX LP text format, for inspecting programs with external tools.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::sync::Mutex;

use log::warn;

use super::{LinearProgram, Relation, Sense};
use crate::error::Result;

/// Directory receiving every solved program, and the number written so far.
static DUMP_DIR: Mutex<Option<(PathBuf, usize)>> = Mutex::new(None);

/// Writes every program passed to the solver into `dir` as `lp-NNNNNN.lp`.
/// `None` turns dumping off.
pub fn set_dump_dir(dir: Option<PathBuf>) -> Result<()> {
    if let Some(d) = &dir {
        fs::create_dir_all(d)?;
    }
    *DUMP_DIR.lock().unwrap_or_else(|e| e.into_inner()) = dir.map(|d| (d, 0));
    Ok(())
}

pub(crate) fn maybe_dump(lp: &LinearProgram) {
    let mut guard = DUMP_DIR.lock().unwrap_or_else(|e| e.into_inner());
    let Some((dir, count)) = guard.as_mut() else {
        return;
    };
    let path = dir.join(format!("lp-{count:06}.lp"));
    *count += 1;
    let written: Result<()> = fs::File::create(&path).map_err(Into::into).and_then(|f| {
        let mut w = BufWriter::new(f);
        write_lp_format(lp, &mut w)?;
        w.flush()?;
        Ok(())
    });
    if let Err(e) = written {
        warn!("could not dump program to {}: {e}", path.display());
    }
}

fn write_terms<W: Write>(out: &mut W, terms: impl Iterator<Item = (usize, f64)>) -> Result<()> {
    let mut any = false;
    for (k, (j, c)) in terms.enumerate() {
        if k > 0 && k % 8 == 0 {
            write!(out, "\n   ")?;
        }
        let sign = if c < 0.0 { '-' } else { '+' };
        write!(out, " {sign} {:e} x{j}", c.abs())?;
        any = true;
    }
    if !any {
        write!(out, " 0 x0")?;
    }
    Ok(())
}

fn fmt_bound(v: f64) -> String {
    if v == f64::INFINITY {
        "+inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v:e}")
    }
}

pub fn write_lp_format<W: Write>(lp: &LinearProgram, out: &mut W) -> Result<()> {
    writeln!(out, "\\ {} variables, {} rows", lp.num_vars(), lp.num_rows())?;
    writeln!(
        out,
        "{}",
        match lp.sense() {
            Sense::Min => "Minimize",
            Sense::Max => "Maximize",
        }
    )?;
    write!(out, " obj:")?;
    write_terms(
        out,
        lp.objective()
            .iter()
            .copied()
            .enumerate()
            .filter(|t| t.1 != 0.0),
    )?;
    writeln!(out)?;
    writeln!(out, "Subject To")?;
    for (i, c) in lp.constraints().iter().enumerate() {
        write!(out, " c{i}:")?;
        write_terms(out, c.coeffs.iter().copied())?;
        let rel = match c.relation {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        };
        writeln!(out, " {rel} {:e}", c.rhs)?;
    }
    writeln!(out, "Bounds")?;
    for j in 0..lp.num_vars() {
        let (lo, hi) = (lp.lower()[j], lp.upper()[j]);
        if lo == f64::NEG_INFINITY && hi == f64::INFINITY {
            writeln!(out, " x{j} free")?;
        } else if lo != 0.0 || hi != f64::INFINITY {
            writeln!(out, " {} <= x{j} <= {}", fmt_bound(lo), fmt_bound(hi))?;
        }
    }
    writeln!(out, "End")?;
    Ok(())
}
