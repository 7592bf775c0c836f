//! Per-solve CSV dump: `solve,t,level,residual,achieved,active`.

use std::io::{self, Write};

use super::HqpSolution;

pub const DEBUG_HEADER: &str = "solve,t,level,residual,achieved,active";

/// Writes one line per level; `active` is a space-separated row list.
pub fn write_debug_rows<W: Write>(out: &mut W, solve: usize, t: f64, sol: &HqpSolution) -> io::Result<()> {
    for (i, (r, a)) in sol.level_residuals.iter().zip(&sol.achieved_residuals).enumerate() {
        let active: Vec<String> = sol.active[i].iter().map(|k| k.to_string()).collect();
        writeln!(out, "{solve},{t:.6},{},{r:.6e},{a:.6e},{}", i + 1, active.join(" "))?;
    }
    Ok(())
}
