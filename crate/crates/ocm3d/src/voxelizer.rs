//! Object-centric adaptive voxelization: RoI point cloud extraction from a
//! depth map, depth-outlier removal, the object-aware (uniform) and
//! point-aware (quantile) grid constructions, and mean-RGB voxel features.

use crate::error::{Error, Result};
use crate::geometry::{backproject, Box2D, Point3};
use crate::kitti_io::{CameraCalib, DepthMap};

/// Default grid resolution (n_x, n_y, n_z).
pub const DEFAULT_GRID_SHAPE: (usize, usize, usize) = (32, 16, 64);

/// Default depth-outlier margin in meters beyond the mean depth.
pub const DEFAULT_OUTLIER_MARGIN: f64 = 3.0;

/// Abstract RGB accessor; channels are in [0, 1].
pub trait PixelSource {
    fn width(&self) -> u32;
    fn height(&self) -> u32;
    fn rgb(&self, u: u32, v: u32) -> [f64; 3];
}

/// `PixelSource` backed by a decoded 8-bit RGB image.
pub struct RgbImageSource<'a>(pub &'a image::RgbImage);

impl PixelSource for RgbImageSource<'_> {
    fn width(&self) -> u32 {
        self.0.width()
    }
    fn height(&self) -> u32 {
        self.0.height()
    }
    fn rgb(&self, u: u32, v: u32) -> [f64; 3] {
        let p = self.0.get_pixel(u, v);
        [p[0] as f64 / 255.0, p[1] as f64 / 255.0, p[2] as f64 / 255.0]
    }
}

/// Per-object point cloud with parallel colors and source pixels.
#[derive(Debug, Clone)]
pub struct RoiPointCloud {
    pub points: Vec<Point3>,
    pub colors: Vec<[f64; 3]>,
    pub source_pixels: Vec<(u32, u32)>,
}

impl RoiPointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Replace the coordinates, keeping colors and source pixels paired.
    pub fn with_points(&self, points: Vec<Point3>) -> RoiPointCloud {
        assert_eq!(points.len(), self.points.len());
        RoiPointCloud { points, colors: self.colors.clone(), source_pixels: self.source_pixels.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridMode {
    ObjectAware,
    PointAware,
}

/// Per-axis boundary sequences defining an adaptive partition.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub boundaries_x: Vec<f64>,
    pub boundaries_y: Vec<f64>,
    pub boundaries_z: Vec<f64>,
    pub mode: GridMode,
}

impl GridSpec {
    pub fn shape(&self) -> (usize, usize, usize) {
        (
            self.boundaries_x.len() - 1,
            self.boundaries_y.len() - 1,
            self.boundaries_z.len() - 1,
        )
    }

    pub fn cell_count(&self) -> usize {
        let (nx, ny, nz) = self.shape();
        nx * ny * nz
    }

    /// True when every boundary collapses to a single value on every axis.
    pub fn is_fully_degenerate(&self) -> bool {
        [&self.boundaries_x, &self.boundaries_y, &self.boundaries_z]
            .iter()
            .all(|b| b.last() == b.first())
    }
}

/// Dense voxel tensor over a `GridSpec`: mean-RGB features plus counts.
#[derive(Debug, Clone)]
pub struct VoxelGrid {
    pub spec: GridSpec,
    /// nx*ny*nz*3, x-major flattening, zero where count = 0
    pub features: Vec<f64>,
    pub counts: Vec<u32>,
    /// points that fell outside the spec coverage and were clamped
    pub out_of_range: usize,
}

impl VoxelGrid {
    pub fn flat_index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        let (_, ny, nz) = self.spec.shape();
        (ix * ny + iy) * nz + iz
    }

    pub fn occupancy(&self) -> f64 {
        let occupied = self.counts.iter().filter(|&&c| c > 0).count();
        occupied as f64 / self.counts.len() as f64
    }
}

/// One point per valid-depth pixel inside the 2D box (left/top inclusive,
/// right/bottom exclusive), back-projected through the calibration.
pub fn extract_roi_points(
    depth: &DepthMap,
    rgb: &dyn PixelSource,
    box2d: &Box2D,
    calib: &CameraCalib,
) -> Result<RoiPointCloud> {
    if depth.width != rgb.width() || depth.height != rgb.height() {
        return Err(Error::Format(format!(
            "depth is {}x{} but image is {}x{}",
            depth.width,
            depth.height,
            rgb.width(),
            rgb.height()
        )));
    }
    let u0 = box2d.left.ceil().max(0.0) as u32;
    let v0 = box2d.top.ceil().max(0.0) as u32;
    let mut cloud = RoiPointCloud { points: Vec::new(), colors: Vec::new(), source_pixels: Vec::new() };
    let mut v = v0;
    while (v as f64) < box2d.bottom && v < depth.height {
        let mut u = u0;
        while (u as f64) < box2d.right && u < depth.width {
            if let Some(d) = depth.get(u, v) {
                cloud.points.push(backproject(u as f64, v as f64, d, calib)?);
                cloud.colors.push(rgb.rgb(u, v));
                cloud.source_pixels.push((u, v));
            }
            u += 1;
        }
        v += 1;
    }
    if cloud.is_empty() {
        return Err(Error::EmptyRoi(
            "no valid-depth pixels inside the 2D box".into(),
        ));
    }
    Ok(cloud)
}

/// Drop points whose depth exceeds mean depth + margin. The second return
/// value flags the degenerate case where only the minimum-depth point
/// could be kept.
pub fn remove_outliers(cloud: &RoiPointCloud, margin: f64) -> (RoiPointCloud, bool) {
    assert!(margin > 0.0, "outlier margin must be positive");
    let n = cloud.len();
    let mean_z: f64 = cloud.points.iter().map(|p| p.z).sum::<f64>() / n as f64;
    let cutoff = mean_z + margin;
    let keep: Vec<usize> = (0..n).filter(|&i| cloud.points[i].z <= cutoff).collect();
    let (keep, degenerate) = if keep.is_empty() {
        let min_i = (0..n)
            .min_by(|&a, &b| cloud.points[a].z.total_cmp(&cloud.points[b].z))
            .unwrap();
        (vec![min_i], true)
    } else {
        (keep, false)
    };
    let filtered = RoiPointCloud {
        points: keep.iter().map(|&i| cloud.points[i]).collect(),
        colors: keep.iter().map(|&i| cloud.colors[i]).collect(),
        source_pixels: keep.iter().map(|&i| cloud.source_pixels[i]).collect(),
    };
    (filtered, degenerate)
}

fn axis_coords(cloud: &RoiPointCloud, axis: usize) -> Vec<f64> {
    cloud
        .points
        .iter()
        .map(|p| match axis {
            0 => p.x,
            1 => p.y,
            _ => p.z,
        })
        .collect()
}

fn object_aware_axis(coords: &[f64], n: usize) -> Vec<f64> {
    let min = coords.iter().copied().fold(f64::INFINITY, f64::min);
    let max = coords.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let size = (max - min) / n as f64;
    let mut bounds: Vec<f64> = (0..=n).map(|k| min + k as f64 * size).collect();
    // min + n * size can round below the true maximum; snap the last
    // boundary so the source cloud is always covered
    bounds[n] = max;
    bounds
}

fn point_aware_axis(coords: &[f64], n: usize) -> Vec<f64> {
    let mut sorted = coords.to_vec();
    sorted.sort_by(f64::total_cmp);
    let len = sorted.len();
    // index floor(k*N/n), with k = n clamped back to the last element so
    // the maximum point stays inside the (closed) final interval
    (0..=n)
        .map(|k| sorted[(k * len / n).min(len - 1)])
        .collect()
}

/// Object-aware grid: uniform voxel size (max - min) / n per axis.
pub fn object_aware_grid(cloud: &RoiPointCloud, shape: (usize, usize, usize)) -> GridSpec {
    assert!(!cloud.is_empty(), "grid construction needs at least one point");
    GridSpec {
        boundaries_x: object_aware_axis(&axis_coords(cloud, 0), shape.0),
        boundaries_y: object_aware_axis(&axis_coords(cloud, 1), shape.1),
        boundaries_z: object_aware_axis(&axis_coords(cloud, 2), shape.2),
        mode: GridMode::ObjectAware,
    }
}

/// Point-aware grid: boundaries at quantiles of the sorted coordinates, so
/// dense regions get fine cells and sparse regions coarse ones.
pub fn point_aware_grid(cloud: &RoiPointCloud, shape: (usize, usize, usize)) -> GridSpec {
    assert!(!cloud.is_empty(), "grid construction needs at least one point");
    GridSpec {
        boundaries_x: point_aware_axis(&axis_coords(cloud, 0), shape.0),
        boundaries_y: point_aware_axis(&axis_coords(cloud, 1), shape.1),
        boundaries_z: point_aware_axis(&axis_coords(cloud, 2), shape.2),
        mode: GridMode::PointAware,
    }
}

/// Cell lookup over a non-decreasing boundary sequence using half-open
/// intervals [b_k, b_{k+1}) with the final interval closed. Duplicate
/// boundaries pile into the first matching cell. Out-of-range coordinates
/// clamp to the nearest boundary cell; the flag reports in-range.
pub(crate) fn cell_index(bounds: &[f64], x: f64) -> (usize, bool) {
    let n = bounds.len() - 1;
    if x < bounds[0] {
        return (0, false);
    }
    if x >= bounds[n] {
        // first interval whose upper edge reaches x (handles degenerate
        // axes, where every point maps to cell 0)
        let cell = (0..n).find(|&k| bounds[k + 1] >= x).unwrap_or(n - 1);
        return (cell, x == bounds[n]);
    }
    let cell = (0..n).find(|&k| bounds[k + 1] > x).expect("x < bounds[n]");
    (cell, true)
}

fn cell_index_binary(bounds: &[f64], x: f64) -> (usize, bool) {
    // partition_point gives the count of boundaries <= x; the linear rules
    // above are recovered by stepping back over duplicates
    let n = bounds.len() - 1;
    if x < bounds[0] {
        return (0, false);
    }
    if x >= bounds[n] {
        return cell_index(bounds, x);
    }
    let k = bounds.partition_point(|&b| b <= x) - 1;
    // duplicates of x: first matching half-open interval is the one whose
    // upper edge strictly exceeds x
    let mut cell = k;
    while cell + 1 < bounds.len() - 1 && bounds[cell + 1] <= x {
        cell += 1;
    }
    (cell, true)
}

/// Assign every point to a cell and accumulate mean-RGB features.
pub fn voxelize(cloud: &RoiPointCloud, spec: &GridSpec) -> VoxelGrid {
    let (nx, ny, nz) = spec.shape();
    let cells = nx * ny * nz;
    let mut counts = vec![0u32; cells];
    let mut features = vec![0.0f64; cells * 3];
    let mut out_of_range = 0usize;
    for (p, color) in cloud.points.iter().zip(cloud.colors.iter()) {
        let (ix, okx) = cell_index_binary(&spec.boundaries_x, p.x);
        let (iy, oky) = cell_index_binary(&spec.boundaries_y, p.y);
        let (iz, okz) = cell_index_binary(&spec.boundaries_z, p.z);
        if !(okx && oky && okz) {
            out_of_range += 1;
        }
        let flat = (ix * ny + iy) * nz + iz;
        counts[flat] += 1;
        for c in 0..3 {
            features[flat * 3 + c] += color[c];
        }
    }
    for (i, &count) in counts.iter().enumerate() {
        if count > 0 {
            for c in 0..3 {
                features[i * 3 + c] /= count as f64;
            }
        }
    }
    VoxelGrid { spec: spec.clone(), features, counts, out_of_range }
}
