//! Camera model, 3D box algebra, projections, angle conversions, frustum
//! normalization and every IoU variant used by the pipeline.
//!
//! Conventions: camera frame is x right, y down, z forward; `Box3D::center`
//! is the KITTI bottom-face center; angles are radians wrapped to (-pi, pi].

use std::f64::consts::{PI, TAU};

use crate::error::{Error, Result};
use crate::kitti_io::CameraCalib;

/// Polygon areas at or below this are treated as empty during clipping.
pub const AREA_EPS: f64 = 1e-12;

/// Corners closer to the camera plane than this are clamped before
/// projection. Lossy, but only affects extreme truncation.
pub const MIN_PROJECT_Z: f64 = 1e-3;

/// Wrap an angle to (-pi, pi]; -pi canonicalizes to pi.
pub fn wrap_angle(a: f64) -> f64 {
    let mut a = a % TAU;
    if a <= -PI {
        a += TAU;
    } else if a > PI {
        a -= TAU;
    }
    a
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Point3 { x, y, z }
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        let (dx, dy, dz) = (self.x - other.x, self.y - other.y, self.z - other.z);
        (dx * dx + dy * dy + dz * dz).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Box2D {
    pub left: f64,
    pub top: f64,
    pub right: f64,
    pub bottom: f64,
}

impl Box2D {
    pub fn new(left: f64, top: f64, right: f64, bottom: f64) -> Self {
        Box2D { left, top, right, bottom }
    }

    pub fn width(&self) -> f64 {
        self.right - self.left
    }

    pub fn height(&self) -> f64 {
        self.bottom - self.top
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.left + self.right) / 2.0, (self.top + self.bottom) / 2.0)
    }
}

/// Object dimensions in meters, KITTI order (height, width, length).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dimensions {
    pub h: f64,
    pub w: f64,
    pub l: f64,
}

impl Dimensions {
    pub fn new(h: f64, w: f64, l: f64) -> Self {
        Dimensions { h, w, l }
    }
}

/// Oriented 3D box. `center` is the bottom-face center (KITTI label
/// convention), `rotation_y` the heading about the y axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Box3D {
    pub center: Point3,
    pub dims: Dimensions,
    pub rotation_y: f64,
}

impl Box3D {
    pub fn new(center: Point3, dims: Dimensions, rotation_y: f64) -> Self {
        Box3D { center, dims, rotation_y }
    }

    pub fn volume(&self) -> f64 {
        self.dims.h * self.dims.w * self.dims.l
    }
}

/// Back-project a pixel at a known depth into the camera frame.
pub fn backproject(u: f64, v: f64, depth: f64, calib: &CameraCalib) -> Result<Point3> {
    if depth <= 0.0 {
        return Err(Error::Domain(format!("backproject requires depth > 0, got {depth}")));
    }
    let x = ((u - calib.cx) * depth - calib.tx) / calib.fx;
    let y = ((v - calib.cy) * depth - calib.ty) / calib.fy;
    Ok(Point3::new(x, y, depth))
}

/// Project a camera-frame point to pixels via the full 3x4 matrix.
pub fn project(p: &Point3, calib: &CameraCalib) -> Result<(f64, f64)> {
    if p.z <= 0.0 {
        return Err(Error::BehindCamera(format!("point at z = {} cannot be projected", p.z)));
    }
    let m = &calib.p;
    let w = m[2][0] * p.x + m[2][1] * p.y + m[2][2] * p.z + m[2][3];
    let u = (m[0][0] * p.x + m[0][1] * p.y + m[0][2] * p.z + m[0][3]) / w;
    let v = (m[1][0] * p.x + m[1][1] * p.y + m[1][2] * p.z + m[1][3]) / w;
    Ok((u, v))
}

/// The eight corners of the oriented cuboid: indices 0..4 are the footprint
/// (y = center.y), 4..8 the top face (y = center.y - h).
pub fn box3d_corners(b: &Box3D) -> [Point3; 8] {
    let (c, s) = (b.rotation_y.cos(), b.rotation_y.sin());
    let (hl, hw) = (b.dims.l / 2.0, b.dims.w / 2.0);
    // footprint in local frame, counter-clockwise in the x-z plane
    let local = [(hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw)];
    let mut out = [Point3::new(0.0, 0.0, 0.0); 8];
    for (i, (lx, lz)) in local.iter().enumerate() {
        let x = c * lx + s * lz + b.center.x;
        let z = -s * lx + c * lz + b.center.z;
        out[i] = Point3::new(x, b.center.y, z);
        out[i + 4] = Point3::new(x, b.center.y - b.dims.h, z);
    }
    out
}

/// Axis-aligned hull of the projected box corners. Corners straddling the
/// camera plane are clamped to z = MIN_PROJECT_Z; with `clip` set the hull
/// is intersected with [0,w] x [0,h].
pub fn project_box3d(
    b: &Box3D,
    calib: &CameraCalib,
    image_size: (f64, f64),
    clip: bool,
) -> Result<Box2D> {
    let corners = box3d_corners(b);
    if corners.iter().all(|p| p.z <= 0.0) {
        return Err(Error::BehindCamera("all box corners behind the camera".into()));
    }
    let mut left = f64::INFINITY;
    let mut top = f64::INFINITY;
    let mut right = f64::NEG_INFINITY;
    let mut bottom = f64::NEG_INFINITY;
    for p in corners {
        let clamped = Point3::new(p.x, p.y, p.z.max(MIN_PROJECT_Z));
        let (u, v) = project(&clamped, calib)?;
        left = left.min(u);
        right = right.max(u);
        top = top.min(v);
        bottom = bottom.max(v);
    }
    if clip {
        let (w, h) = image_size;
        left = left.clamp(0.0, w);
        right = right.clamp(0.0, w);
        top = top.clamp(0.0, h);
        bottom = bottom.clamp(0.0, h);
    }
    Ok(Box2D::new(left, top, right, bottom))
}

/// Axis-aligned intersection-over-union. Zero union is defined as 0.
pub fn iou_2d(a: &Box2D, b: &Box2D) -> f64 {
    let iw = (a.right.min(b.right) - a.left.max(b.left)).max(0.0);
    let ih = (a.bottom.min(b.bottom) - a.top.max(b.top)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

fn footprint(b: &Box3D) -> Vec<(f64, f64)> {
    box3d_corners(b)[..4].iter().map(|p| (p.x, p.z)).collect()
}

fn polygon_area(poly: &[(f64, f64)]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..poly.len() {
        let (x0, y0) = poly[i];
        let (x1, y1) = poly[(i + 1) % poly.len()];
        acc += x0 * y1 - x1 * y0;
    }
    acc.abs() / 2.0
}

/// Sutherland-Hodgman clipping of a convex `subject` against a convex
/// counter-clockwise `clip` polygon.
fn clip_convex(subject: &[(f64, f64)], clip: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut output: Vec<(f64, f64)> = subject.to_vec();
    for i in 0..clip.len() {
        if output.is_empty() {
            break;
        }
        let (ax, ay) = clip[i];
        let (bx, by) = clip[(i + 1) % clip.len()];
        let inside = |p: (f64, f64)| (bx - ax) * (p.1 - ay) - (by - ay) * (p.0 - ax) >= 0.0;
        let intersect = |p: (f64, f64), q: (f64, f64)| {
            let d1 = (bx - ax) * (p.1 - ay) - (by - ay) * (p.0 - ax);
            let d2 = (bx - ax) * (q.1 - ay) - (by - ay) * (q.0 - ax);
            let t = d1 / (d1 - d2);
            (p.0 + t * (q.0 - p.0), p.1 + t * (q.1 - p.1))
        };
        let input = std::mem::take(&mut output);
        for j in 0..input.len() {
            let cur = input[j];
            let next = input[(j + 1) % input.len()];
            match (inside(cur), inside(next)) {
                (true, true) => output.push(next),
                (true, false) => output.push(intersect(cur, next)),
                (false, true) => {
                    output.push(intersect(cur, next));
                    output.push(next);
                }
                (false, false) => {}
            }
        }
    }
    output
}

fn bev_intersection_area(a: &Box3D, b: &Box3D) -> f64 {
    // footprints are CCW in (x, z) by construction
    let inter = clip_convex(&footprint(a), &footprint(b));
    let area = polygon_area(&inter);
    if area <= AREA_EPS {
        0.0
    } else {
        area
    }
}

/// Bird's-eye-view IoU of the rotated footprints.
pub fn iou_bev(a: &Box3D, b: &Box3D) -> f64 {
    let inter = bev_intersection_area(a, b);
    let area_a = a.dims.w * a.dims.l;
    let area_b = b.dims.w * b.dims.l;
    let union = area_a + area_b - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// 3D IoU: BEV intersection area times vertical overlap, over volume union.
pub fn iou_3d(a: &Box3D, b: &Box3D) -> f64 {
    let inter_bev = bev_intersection_area(a, b);
    // y is down: the box spans [center.y - h, center.y]
    let y_overlap =
        (a.center.y.min(b.center.y) - (a.center.y - a.dims.h).max(b.center.y - b.dims.h)).max(0.0);
    let inter = inter_bev * y_overlap;
    let union = a.volume() + b.volume() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Viewing angle of a camera-frame location: atan2(x, z).
pub fn viewing_angle(location: &Point3) -> Result<f64> {
    if location.z <= 0.0 {
        return Err(Error::Domain(format!(
            "viewing angle undefined for z = {}",
            location.z
        )));
    }
    Ok(location.x.atan2(location.z))
}

/// Global orientation from observation angle: ry = alpha + atan2(x, z).
pub fn alpha_to_ry(alpha: f64, location: &Point3) -> Result<f64> {
    Ok(wrap_angle(alpha + viewing_angle(location)?))
}

/// Observation angle from global orientation (inverse of `alpha_to_ry`).
pub fn ry_to_alpha(rotation_y: f64, location: &Point3) -> Result<f64> {
    Ok(wrap_angle(rotation_y - viewing_angle(location)?))
}

/// Rotate points about the y axis by `angle` (positive maps +z toward +x).
pub fn rotate_y(points: &[Point3], angle: f64) -> Vec<Point3> {
    let (c, s) = (angle.cos(), angle.sin());
    points
        .iter()
        .map(|p| Point3::new(c * p.x + s * p.z, p.y, -s * p.x + c * p.z))
        .collect()
}

/// Rigidly rotate a frustum point cloud so the ray through the 2D box
/// center lands on the +z axis. Returns the rotated points and the angle
/// theta that was removed (apply `rotate_y(points, theta)` to invert).
pub fn frustum_rotate(
    points: &[Point3],
    box2d: &Box2D,
    calib: &CameraCalib,
) -> Result<(Vec<Point3>, f64)> {
    if points.is_empty() {
        return Err(Error::Domain("frustum_rotate needs at least one point".into()));
    }
    let (cu, cv) = box2d.center();
    let ray = backproject(cu, cv, 1.0, calib)?;
    let theta = ray.x.atan2(ray.z);
    Ok((rotate_y(points, -theta), theta))
}
