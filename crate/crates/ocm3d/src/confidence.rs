//! Decomposed 3D detection confidence: the 2D detector's score times a
//! distance-discounted IoU between the projected 3D box hull and the
//! detected 2D box. Needs no training, so it can rescore any
//! 2D-detector-based method's output files directly.

use crate::error::{Error, Result};
use crate::geometry::{iou_2d, project_box3d, Box2D, Box3D};
use crate::kitti_io::{CameraCalib, ObjectRecord};

/// Default depth scale in meters (the usual max depth in KITTI).
pub const DEFAULT_LAMBDA: f64 = 80.0;

#[derive(Debug, Clone, Copy)]
pub struct RescoreConfig {
    /// depth scale for the exponential distance discount
    pub lambda: f64,
    /// clip the projected hull to the image before the IoU
    pub clip_projection: bool,
    pub image_size: (f64, f64),
}

impl Default for RescoreConfig {
    fn default() -> Self {
        RescoreConfig {
            lambda: DEFAULT_LAMBDA,
            clip_projection: true,
            image_size: (1242.0, 375.0),
        }
    }
}

/// Lifting confidence with a flag for boxes entirely behind the camera
/// (scored 0 rather than aborting a batch).
#[derive(Debug, Clone, Copy)]
pub struct LiftingConfidence {
    pub value: f64,
    pub behind_camera: bool,
}

/// Conf_2D->3D = IoU(projected 3D hull, 2D box) / exp(dis / lambda), with
/// dis the Euclidean distance of the box center from the optical center.
pub fn lifting_confidence(
    b3: &Box3D,
    b2: &Box2D,
    calib: &CameraCalib,
    cfg: &RescoreConfig,
) -> LiftingConfidence {
    let projected = match project_box3d(b3, calib, cfg.image_size, cfg.clip_projection) {
        Ok(hull) => hull,
        Err(_) => return LiftingConfidence { value: 0.0, behind_camera: true },
    };
    let dis = b3.center.norm();
    let value = iou_2d(&projected, b2) / (dis / cfg.lambda).exp();
    LiftingConfidence { value, behind_camera: false }
}

/// Conf_3D = Conf_2D x Conf_2D->3D for every detection; all other fields
/// and the record order are preserved.
pub fn rescore(
    dets: &[ObjectRecord],
    calib: &CameraCalib,
    cfg: &RescoreConfig,
) -> Result<Vec<ObjectRecord>> {
    let mut out = Vec::with_capacity(dets.len());
    for (i, det) in dets.iter().enumerate() {
        let Some(score) = det.score else {
            return Err(Error::Validation(format!(
                "detection {} ({}) carries no 2D score",
                i + 1,
                det.class_name
            )));
        };
        let lift = lifting_confidence(&det.box3d(), &det.box2d, calib, cfg);
        let mut rescored = det.clone();
        rescored.score = Some(score * lift.value);
        out.push(rescored);
    }
    Ok(out)
}
