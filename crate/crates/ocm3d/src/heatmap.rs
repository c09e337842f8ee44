//! 3D center heatmap targets over a `GridSpec` and peak decoding back to
//! metric centers. Targets follow the CenterNet recipe with a fixed
//! isotropic Gaussian radius measured in cell-index space, so non-uniform
//! point-aware grids still get a well-shaped peak.

use crate::error::{Error, Result};
use crate::geometry::Point3;
use crate::voxelizer::{cell_index, GridSpec};

/// Default Gaussian radius in voxels.
pub const DEFAULT_RADIUS: f64 = 2.0;

/// Default smooth-L1 transition point.
pub const DEFAULT_BETA: f64 = 1.0;

/// Dense 3D score volume over a grid, values in [0, 1].
#[derive(Debug, Clone)]
pub struct Heatmap3D {
    pub spec: GridSpec,
    /// x-major flattening, like `VoxelGrid`
    pub scores: Vec<f64>,
}

/// Result of peak decoding.
#[derive(Debug, Clone, Copy)]
pub struct DecodedCenter {
    pub center: Point3,
    pub score: f64,
    pub cell: (usize, usize, usize),
    /// set when the heatmap was all zeros and cell 0 was reported
    pub no_peak: bool,
}

fn clamp_to_coverage(bounds: &[f64], x: f64) -> f64 {
    x.clamp(bounds[0], bounds[bounds.len() - 1])
}

/// Gaussian target with peak exactly 1.0 at the ground-truth cell:
/// score(c) = exp(-d^2 / (2 (radius/3)^2)) with d in cell-index space.
pub fn heatmap_target(spec: GridSpec, gt_center: Point3, radius: f64) -> Result<Heatmap3D> {
    if radius <= 0.0 {
        return Err(Error::Domain(format!("radius must be positive, got {radius}")));
    }
    if spec.is_fully_degenerate() {
        return Err(Error::DegenerateGrid(
            "all boundaries equal on every axis".into(),
        ));
    }
    let (nx, ny, nz) = spec.shape();
    let (cx, _) = cell_index(&spec.boundaries_x, clamp_to_coverage(&spec.boundaries_x, gt_center.x));
    let (cy, _) = cell_index(&spec.boundaries_y, clamp_to_coverage(&spec.boundaries_y, gt_center.y));
    let (cz, _) = cell_index(&spec.boundaries_z, clamp_to_coverage(&spec.boundaries_z, gt_center.z));
    let sigma = radius / 3.0;
    let denom = 2.0 * sigma * sigma;
    let mut scores = vec![0.0; nx * ny * nz];
    for ix in 0..nx {
        for iy in 0..ny {
            for iz in 0..nz {
                let dx = ix as f64 - cx as f64;
                let dy = iy as f64 - cy as f64;
                let dz = iz as f64 - cz as f64;
                scores[(ix * ny + iy) * nz + iz] = (-(dx * dx + dy * dy + dz * dz) / denom).exp();
            }
        }
    }
    Ok(Heatmap3D { spec, scores })
}

/// Argmax decoding; ties break to the lowest flat index (x-major, then y,
/// then z). The decoded center is the midpoint of the peak cell.
pub fn decode_center(hm: &Heatmap3D) -> DecodedCenter {
    let (_, ny, nz) = hm.spec.shape();
    let mut best = 0usize;
    for (i, &s) in hm.scores.iter().enumerate() {
        if s > hm.scores[best] {
            best = i;
        }
    }
    let iz = best % nz;
    let iy = (best / nz) % ny;
    let ix = best / (nz * ny);
    let mid = |b: &[f64], k: usize| (b[k] + b[k + 1]) / 2.0;
    let score = hm.scores[best];
    DecodedCenter {
        center: Point3::new(
            mid(&hm.spec.boundaries_x, ix),
            mid(&hm.spec.boundaries_y, iy),
            mid(&hm.spec.boundaries_z, iz),
        ),
        score,
        cell: (ix, iy, iz),
        no_peak: score == 0.0,
    }
}

/// Mean-reduced smooth L1: 0.5 d^2 / beta for |d| < beta, |d| - 0.5 beta
/// otherwise.
pub fn smooth_l1(pred: &[f64], target: &[f64], beta: f64) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::Domain(format!(
            "shape mismatch: {} vs {} elements",
            pred.len(),
            target.len()
        )));
    }
    if beta <= 0.0 {
        return Err(Error::Domain(format!("beta must be positive, got {beta}")));
    }
    if pred.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = pred
        .iter()
        .zip(target.iter())
        .map(|(&p, &t)| {
            let d = (p - t).abs();
            if d < beta {
                0.5 * d * d / beta
            } else {
                d - 0.5 * beta
            }
        })
        .sum();
    Ok(sum / pred.len() as f64)
}
