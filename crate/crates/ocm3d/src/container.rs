//! Self-describing little-endian binary container for voxel grids ("OCMV")
//! and heatmap targets ("OCMH"): magic, version byte, grid mode, shape,
//! per-axis boundaries, then the flattened payload tensors.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::heatmap::Heatmap3D;
use crate::voxelizer::{GridMode, GridSpec, VoxelGrid};

pub const MAGIC_VOXEL: [u8; 4] = *b"OCMV";
pub const MAGIC_HEATMAP: [u8; 4] = *b"OCMH";
pub const VERSION: u8 = 1;

fn write_f64s<W: Write>(w: &mut W, vals: &[f64]) -> Result<()> {
    for v in vals {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut buf = [0u8; 8];
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        r.read_exact(&mut buf)?;
        out.push(f64::from_le_bytes(buf));
    }
    Ok(out)
}

fn write_header<W: Write>(w: &mut W, magic: &[u8; 4], spec: &GridSpec) -> Result<()> {
    w.write_all(magic)?;
    w.write_all(&[VERSION])?;
    let mode = match spec.mode {
        GridMode::ObjectAware => 0u8,
        GridMode::PointAware => 1u8,
    };
    w.write_all(&[mode])?;
    let (nx, ny, nz) = spec.shape();
    for n in [nx, ny, nz] {
        w.write_all(&(n as u32).to_le_bytes())?;
    }
    write_f64s(w, &spec.boundaries_x)?;
    write_f64s(w, &spec.boundaries_y)?;
    write_f64s(w, &spec.boundaries_z)?;
    Ok(())
}

fn read_header<R: Read>(r: &mut R, magic: &[u8; 4]) -> Result<GridSpec> {
    let mut got = [0u8; 4];
    r.read_exact(&mut got)?;
    if &got != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&got),
            String::from_utf8_lossy(magic)
        )));
    }
    let mut byte = [0u8; 1];
    r.read_exact(&mut byte)?;
    if byte[0] != VERSION {
        return Err(Error::Format(format!("unsupported container version {}", byte[0])));
    }
    r.read_exact(&mut byte)?;
    let mode = match byte[0] {
        0 => GridMode::ObjectAware,
        1 => GridMode::PointAware,
        m => return Err(Error::Format(format!("unknown grid mode {m}"))),
    };
    let mut dims = [0usize; 3];
    for d in &mut dims {
        let mut buf = [0u8; 4];
        r.read_exact(&mut buf)?;
        *d = u32::from_le_bytes(buf) as usize;
    }
    Ok(GridSpec {
        boundaries_x: read_f64s(r, dims[0] + 1)?,
        boundaries_y: read_f64s(r, dims[1] + 1)?,
        boundaries_z: read_f64s(r, dims[2] + 1)?,
        mode,
    })
}

pub fn write_voxel_grid<W: Write>(w: &mut W, grid: &VoxelGrid) -> Result<()> {
    write_header(w, &MAGIC_VOXEL, &grid.spec)?;
    write_f64s(w, &grid.features)?;
    for c in &grid.counts {
        w.write_all(&c.to_le_bytes())?;
    }
    w.write_all(&(grid.out_of_range as u64).to_le_bytes())?;
    Ok(())
}

pub fn read_voxel_grid<R: Read>(r: &mut R) -> Result<VoxelGrid> {
    let spec = read_header(r, &MAGIC_VOXEL)?;
    let cells = spec.cell_count();
    let features = read_f64s(r, cells * 3)?;
    let mut counts = Vec::with_capacity(cells);
    let mut buf = [0u8; 4];
    for _ in 0..cells {
        r.read_exact(&mut buf)?;
        counts.push(u32::from_le_bytes(buf));
    }
    let mut buf8 = [0u8; 8];
    r.read_exact(&mut buf8)?;
    Ok(VoxelGrid { spec, features, counts, out_of_range: u64::from_le_bytes(buf8) as usize })
}

pub fn write_heatmap<W: Write>(w: &mut W, hm: &Heatmap3D) -> Result<()> {
    write_header(w, &MAGIC_HEATMAP, &hm.spec)?;
    write_f64s(w, &hm.scores)
}

pub fn read_heatmap<R: Read>(r: &mut R) -> Result<Heatmap3D> {
    let spec = read_header(r, &MAGIC_HEATMAP)?;
    let cells = spec.cell_count();
    Ok(Heatmap3D { spec, scores: read_f64s(r, cells)? })
}
