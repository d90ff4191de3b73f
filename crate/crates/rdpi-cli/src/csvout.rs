//! Trace CSV emission: fixed column order, 17-significant-digit floats so
//! the file round-trips losslessly and diffs byte-for-byte across runs.

use std::io::{BufWriter, Write};
use std::path::Path;

use rdpi_core::sim::TraceLog;

pub const COLUMNS: &str = "t,u_delayed,u,z,zeta,yx0,r,err,y_inf,y_l2,V";

pub fn write_trace(path: &Path, trace: &TraceLog) -> std::io::Result<()> {
    let file = std::fs::File::create(path)?;
    let mut out = BufWriter::new(file);
    writeln!(out, "{COLUMNS}")?;
    for row in &trace.rows {
        writeln!(
            out,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            row.t,
            row.u_delayed,
            row.u,
            row.z,
            row.zeta,
            row.yx0,
            row.r,
            row.err,
            row.y_inf,
            row.y_l2,
            row.v_lyap
        )?;
    }
    out.flush()
}
