//! On-disk formats: the `EMWF0001` binary field dump, record directories
//! (structured metadata plus per-quantity CSV files) and Wigner exports.
//!
//! Binary layout, little-endian, 64-byte header:
//! bytes 0..8 magic `EMWF0001`, 8..16 dims (u64), 16..40 three point counts
//! (u64 each), 40..64 three extents (f64 each); then the payload as
//! interleaved re/im doubles in row-major order.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use ndarray::{ArrayD, IxDyn};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::TrajectoryRecord;
use crate::error::{Error, Result};
use crate::grid::{Grid, Units, WaveFunction};
use crate::wigner::WignerGrid;

pub const MAGIC: &[u8; 8] = b"EMWF0001";

fn write_header(out: &mut Vec<u8>, dims: usize, shape: &[usize], extents: &[f64]) -> Result<()> {
    if dims > 3 {
        return Err(Error::DimensionUnsupported { max: 3, got: dims });
    }
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(dims as u64).to_le_bytes());
    for a in 0..3 {
        let n = shape.get(a).copied().unwrap_or(0) as u64;
        out.extend_from_slice(&n.to_le_bytes());
    }
    for a in 0..3 {
        let l = extents.get(a).copied().unwrap_or(0.0);
        out.extend_from_slice(&l.to_le_bytes());
    }
    Ok(())
}

/// Write one complex field dump.
pub fn write_snapshot(path: &Path, psi: &WaveFunction) -> Result<()> {
    let grid = psi.grid();
    let mut buf = Vec::with_capacity(64 + 16 * grid.len());
    write_header(&mut buf, grid.dims(), grid.shape(), grid.extents())?;
    for z in psi.amplitudes().iter() {
        buf.extend_from_slice(&z.re.to_le_bytes());
        buf.extend_from_slice(&z.im.to_le_bytes());
    }
    fs::write(path, buf)?;
    Ok(())
}

/// Read a complex field dump back; units are supplied by the caller.
pub fn read_snapshot(path: &Path, units: Units, time: f64) -> Result<WaveFunction> {
    let mut f = fs::File::open(path)?;
    let mut header = [0u8; 64];
    f.read_exact(&mut header)?;
    if &header[0..8] != MAGIC {
        return Err(Error::Other("bad magic in field dump".into()));
    }
    let dims = u64::from_le_bytes(header[8..16].try_into().unwrap()) as usize;
    if dims == 0 || dims > 3 {
        return Err(Error::Other(format!("bad dims {dims} in field dump")));
    }
    let mut shape = Vec::with_capacity(dims);
    let mut extents = Vec::with_capacity(dims);
    for a in 0..dims {
        let o = 16 + 8 * a;
        shape.push(u64::from_le_bytes(header[o..o + 8].try_into().unwrap()) as usize);
        let o = 40 + 8 * a;
        extents.push(f64::from_le_bytes(header[o..o + 8].try_into().unwrap()));
    }
    let n: usize = shape.iter().product();
    let mut payload = vec![0u8; 16 * n];
    f.read_exact(&mut payload)?;
    let mut amps = Vec::with_capacity(n);
    for chunk in payload.chunks_exact(16) {
        let re = f64::from_le_bytes(chunk[0..8].try_into().unwrap());
        let im = f64::from_le_bytes(chunk[8..16].try_into().unwrap());
        amps.push(Complex64::new(re, im));
    }
    let grid = Arc::new(Grid::new(&extents, &shape)?);
    WaveFunction::new(
        grid,
        units,
        ArrayD::from_shape_vec(IxDyn(&shape), amps).expect("shape matches payload"),
        time,
    )
}

/// `t, x[0..d), p[0..d), E` rows.
pub fn expectations_csv(record: &TrajectoryRecord) -> String {
    let d = record.dims();
    let mut out = String::from("t");
    for a in 0..d {
        out.push_str(&format!(",x{a}"));
    }
    for a in 0..d {
        out.push_str(&format!(",p{a}"));
    }
    out.push_str(",E\n");
    for (i, t) in record.times.iter().enumerate() {
        out.push_str(&format!("{t:e}"));
        for a in 0..d {
            out.push_str(&format!(",{:e}", record.x_mean[i][a]));
        }
        for a in 0..d {
            out.push_str(&format!(",{:e}", record.p_mean[i][a]));
        }
        out.push_str(&format!(",{:e}\n", record.energy[i]));
    }
    out
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RecordMeta {
    pub integrator: String,
    pub dt: f64,
    pub save_stride: usize,
    pub saved_times: usize,
    pub snapshots: usize,
    pub dims: usize,
    pub points: Vec<usize>,
    pub extents: Vec<f64>,
    pub hbar: f64,
    pub masses: Vec<f64>,
    pub norm_drift: f64,
    pub boundary_max_density: f64,
    pub scenario_hash: Option<String>,
}

impl RecordMeta {
    pub fn from_record(record: &TrajectoryRecord) -> Self {
        let state = record.initial_state();
        RecordMeta {
            integrator: record.integrator.clone(),
            dt: record.dt,
            save_stride: record.save_stride,
            saved_times: record.times.len(),
            snapshots: record.snapshots.len(),
            dims: state.grid().dims(),
            points: state.grid().shape().to_vec(),
            extents: state.grid().extents().to_vec(),
            hbar: state.hbar(),
            masses: state.units().masses.clone(),
            norm_drift: record.norm_drift,
            boundary_max_density: record.boundary_max,
            scenario_hash: record.scenario_hash.clone(),
        }
    }
}

/// Serialize a record into a directory: `meta.json`, `expectations.csv` and
/// optionally per-snapshot binary dumps under `snapshots/`.
pub fn export_record(dir: &Path, record: &TrajectoryRecord, dump_snapshots: bool) -> Result<()> {
    fs::create_dir_all(dir)?;
    let meta = RecordMeta::from_record(record);
    let mut f = fs::File::create(dir.join("meta.json"))?;
    f.write_all(
        serde_json::to_string_pretty(&meta)
            .map_err(|e| Error::Other(format!("meta serialization: {e}")))?
            .as_bytes(),
    )?;
    fs::write(dir.join("expectations.csv"), expectations_csv(record))?;
    if dump_snapshots {
        let snap_dir = dir.join("snapshots");
        fs::create_dir_all(&snap_dir)?;
        for (ti, snap) in &record.snapshots {
            write_snapshot(&snap_dir.join(format!("snap_{ti:06}.bin")), snap)?;
        }
    }
    Ok(())
}

/// Flat binary dump of a 1-D Wigner lattice (dims = 2: x then p).
pub fn write_wigner(path: &Path, w: &WignerGrid) -> Result<()> {
    if w.dims() != 1 {
        return Err(Error::DimensionUnsupported {
            max: 1,
            got: w.dims(),
        });
    }
    let n = w.grid().shape()[0];
    let lx = w.grid().extents()[0];
    let p_span = w.p_axes[0].last().unwrap() - w.p_axes[0][0];
    let mut buf = Vec::with_capacity(64 + 16 * n * n);
    write_header(&mut buf, 2, &[n, n], &[lx, p_span])?;
    for v in w.values.iter() {
        buf.extend_from_slice(&v.to_le_bytes());
        buf.extend_from_slice(&0.0f64.to_le_bytes());
    }
    fs::write(path, buf)?;
    Ok(())
}
