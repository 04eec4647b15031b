//! File formats: CSV snapshots (17 significant digits, bit-exact
//! round-trip), an optional raw little-endian f64 dump with a 32-byte
//! header, and the diagnostics CSV.

use crate::diagnostics::InvariantSeries;
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::state::DensityState;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const RAW_MAGIC: &[u8; 8] = b"FENECPD0";

/// Snapshot CSV: one metadata comment line, a header row, then one row
/// per DOF with its resolved-axis coordinates and nodal value.
pub fn write_snapshot(path: &Path, mesh: &Mesh, state: &DensityState) -> Result<()> {
    let f = std::fs::File::create(path)?;
    let mut w = BufWriter::new(f);
    writeln!(
        w,
        "# dx={} dq={} nx={} nq={} quad={} homogeneous_x={} t={:.17e} dofs={}",
        mesh.dx(),
        mesh.dq(),
        mesh.n_x(),
        mesh.n_q(),
        mesh.quad_order(),
        if mesh.x_resolved() { 0 } else { 1 },
        state.t,
        mesh.num_dofs()
    )?;
    let mut header: Vec<String> = Vec::new();
    for k in 0..mesh.nx_axes() {
        header.push(format!("x{}", k + 1));
    }
    for k in 0..mesh.dq() {
        header.push(format!("q{}", k + 1));
    }
    header.push("f".into());
    writeln!(w, "{}", header.join(","))?;
    for dof in 0..mesh.num_dofs() {
        let coords = mesh.dof_coords(dof);
        for c in &coords {
            write!(w, "{c:.17e},")?;
        }
        writeln!(w, "{:.17e}", state.coeffs[dof])?;
    }
    w.flush()?;
    Ok(())
}

/// Read back a snapshot written by `write_snapshot`.
pub fn read_snapshot(path: &Path) -> Result<DensityState> {
    let f = std::fs::File::open(path)?;
    let r = BufReader::new(f);
    let mut t = 0.0;
    let mut coeffs = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if i == 0 {
            for token in line.split_whitespace() {
                if let Some(v) = token.strip_prefix("t=") {
                    t = v.parse::<f64>().map_err(|e| Error::InvalidParameter {
                        name: "snapshot",
                        reason: format!("bad time in header: {e}"),
                    })?;
                }
            }
            continue;
        }
        if i == 1 || line.trim().is_empty() {
            continue;
        }
        let last = line.rsplit(',').next().ok_or_else(|| Error::InvalidParameter {
            name: "snapshot",
            reason: format!("malformed row {}", i + 1),
        })?;
        coeffs.push(last.trim().parse::<f64>().map_err(|e| Error::InvalidParameter {
            name: "snapshot",
            reason: format!("row {}: {e}", i + 1),
        })?);
    }
    Ok(DensityState::new(t, coeffs))
}

/// Raw dump: 32-byte header (8-byte magic, u32 dx, dq, nx, nq, u64 dof
/// count, little-endian) followed by the nodal values as little-endian
/// f64.
pub fn write_snapshot_raw(path: &Path, mesh: &Mesh, state: &DensityState) -> Result<()> {
    let f = std::fs::File::create(path)?;
    let mut w = BufWriter::new(f);
    w.write_all(RAW_MAGIC)?;
    for v in [
        mesh.dx() as u32,
        mesh.dq() as u32,
        mesh.n_x() as u32,
        mesh.n_q() as u32,
    ] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&(mesh.num_dofs() as u64).to_le_bytes())?;
    for v in &state.coeffs {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub struct RawSnapshot {
    pub dx: u32,
    pub dq: u32,
    pub n_x: u32,
    pub n_q: u32,
    pub values: Vec<f64>,
}

pub fn read_snapshot_raw(path: &Path) -> Result<RawSnapshot> {
    let mut f = std::fs::File::open(path)?;
    let mut header = [0u8; 32];
    f.read_exact(&mut header)?;
    if &header[0..8] != RAW_MAGIC {
        return Err(Error::InvalidParameter {
            name: "raw snapshot",
            reason: "bad magic".into(),
        });
    }
    let rd_u32 = |o: usize| u32::from_le_bytes(header[o..o + 4].try_into().unwrap());
    let n = u64::from_le_bytes(header[24..32].try_into().unwrap()) as usize;
    let mut buf = Vec::new();
    f.read_to_end(&mut buf)?;
    if buf.len() != 8 * n {
        return Err(Error::InvalidParameter {
            name: "raw snapshot",
            reason: format!("expected {} bytes of payload, got {}", 8 * n, buf.len()),
        });
    }
    let values = buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(RawSnapshot {
        dx: rd_u32(8),
        dq: rd_u32(12),
        n_x: rd_u32(16),
        n_q: rd_u32(20),
        values,
    })
}

/// Diagnostics CSV with the fixed column set
/// `t,l1,l2,h1,min_f,neg_mass,mass,energy_slack`; the slack column is
/// left empty where no certified constants were available.
pub fn write_diagnostics_csv(path: &Path, series: &InvariantSeries) -> Result<()> {
    let f = std::fs::File::create(path)?;
    let mut w = BufWriter::new(f);
    writeln!(w, "t,l1,l2,h1,min_f,neg_mass,mass,energy_slack")?;
    for i in 0..series.len() {
        let slack = match series.energy_slack[i] {
            Some(s) => format!("{s:.17e}"),
            None => String::new(),
        };
        writeln!(
            w,
            "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{}",
            series.t[i],
            series.l1[i],
            series.l2[i],
            series.h1[i],
            series.min_f[i],
            series.neg_mass[i],
            series.mass[i],
            slack
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Per-step solver bookkeeping CSV.
pub fn write_steps_csv(path: &Path, reports: &[crate::solver::StepReport]) -> Result<()> {
    let f = std::fs::File::create(path)?;
    let mut w = BufWriter::new(f);
    writeln!(w, "t,picard_iters,fp_residual,max_linear_iters,max_linear_residual")?;
    for r in reports {
        writeln!(
            w,
            "{:.17e},{},{:.17e},{},{:.17e}",
            r.t,
            r.picard_iters,
            r.fp_residual,
            r.linear_iterations.iter().max().copied().unwrap_or(0),
            r.linear_residuals.iter().cloned().fold(0.0f64, f64::max),
        )?;
    }
    w.flush()?;
    Ok(())
}
