//! KITTI-format parsers and writers: calibration files, object label and
//! detection rows, 16-bit depth rasters, and the leakage-free depth dataset
//! split. All parsers are pure functions over immutable inputs.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::geometry::{Box2D, Box3D, Dimensions, Point3};

/// 3x4 projective camera matrix plus derived pinhole intrinsics.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraCalib {
    pub p: [[f64; 4]; 3],
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// baseline-translation terms, p[0][3] and p[1][3] (pixel-meters)
    pub tx: f64,
    pub ty: f64,
}

impl CameraCalib {
    /// Build from a projective matrix, checking the rectified-camera shape.
    pub fn from_p(p: [[f64; 4]; 3]) -> Result<Self> {
        let (fx, fy, cx, cy) = (p[0][0], p[1][1], p[0][2], p[1][2]);
        if fx <= 0.0 || fy <= 0.0 {
            return Err(Error::Format(format!(
                "focal lengths must be positive, got fx={fx} fy={fy}"
            )));
        }
        if p[2][0].abs() > 1e-6 || p[2][1].abs() > 1e-6 || (p[2][2] - 1.0).abs() > 1e-6 {
            return Err(Error::Format(
                "third matrix row is not (0, 0, 1, *): not a rectified camera".into(),
            ));
        }
        Ok(CameraCalib { p, fx, fy, cx, cy, tx: p[0][3], ty: p[1][3] })
    }

    /// Synthetic rectified camera, handy for tests and fixtures.
    pub fn synthetic(fx: f64, fy: f64, cx: f64, cy: f64) -> Self {
        CameraCalib::from_p([
            [fx, 0.0, cx, 0.0],
            [0.0, fy, cy, 0.0],
            [0.0, 0.0, 1.0, 0.0],
        ])
        .expect("synthetic calib is valid")
    }
}

/// One KITTI label or detection row.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectRecord {
    pub class_name: String,
    pub truncation: f64,
    pub occlusion: i32,
    pub alpha: f64,
    pub box2d: Box2D,
    pub dims: Dimensions,
    pub location: Point3,
    pub rotation_y: f64,
    /// present for detections, absent for ground-truth labels
    pub score: Option<f64>,
}

impl ObjectRecord {
    pub fn is_dontcare(&self) -> bool {
        self.class_name == "DontCare"
    }

    /// The oriented 3D box described by this record.
    pub fn box3d(&self) -> Box3D {
        Box3D::new(self.location, self.dims, self.rotation_y)
    }

    pub fn box_height_px(&self) -> f64 {
        self.box2d.height()
    }
}

/// Dense metric depth grid with an explicit validity mask.
#[derive(Debug, Clone)]
pub struct DepthMap {
    pub width: u32,
    pub height: u32,
    depths: Vec<f64>,
    valid: Vec<bool>,
}

impl DepthMap {
    /// Build from raw 16-bit samples: depth = stored / 256 m, 0 = invalid.
    pub fn from_stored_u16(width: u32, height: u32, stored: &[u16]) -> Result<Self> {
        if stored.len() != (width as usize) * (height as usize) {
            return Err(Error::Format(format!(
                "depth buffer has {} samples, expected {}x{}",
                stored.len(),
                width,
                height
            )));
        }
        let depths = stored.iter().map(|&v| v as f64 / 256.0).collect();
        let valid = stored.iter().map(|&v| v != 0).collect();
        Ok(DepthMap { width, height, depths, valid })
    }

    /// Build from metric depths; values <= 0 are flagged invalid.
    pub fn from_depths(width: u32, height: u32, depths: Vec<f64>) -> Result<Self> {
        if depths.len() != (width as usize) * (height as usize) {
            return Err(Error::Format("depth buffer size mismatch".into()));
        }
        let valid = depths.iter().map(|&d| d > 0.0).collect();
        Ok(DepthMap { width, height, depths, valid })
    }

    /// Depth at a pixel, or None when the pixel is invalid or out of bounds.
    pub fn get(&self, u: u32, v: u32) -> Option<f64> {
        if u >= self.width || v >= self.height {
            return None;
        }
        let i = (v as usize) * (self.width as usize) + u as usize;
        if self.valid[i] {
            Some(self.depths[i])
        } else {
            None
        }
    }
}

/// The remedied depth dataset split: training scenes never overlap any
/// scene touched by the detection validation frames.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitSpec {
    pub depth_train_scenes: BTreeSet<String>,
    pub depth_val_scenes: BTreeSet<String>,
    pub detection_val_frames: BTreeSet<u32>,
}

impl SplitSpec {
    /// Re-check the leakage invariants against a frame-to-scene mapping.
    pub fn check_leakage(&self, frame_to_scene: &BTreeMap<u32, String>) -> Result<()> {
        if let Some(s) = self.depth_train_scenes.intersection(&self.depth_val_scenes).next() {
            return Err(Error::Consistency(format!(
                "scene {s} appears in both depth train and depth val sets"
            )));
        }
        for frame in &self.detection_val_frames {
            match frame_to_scene.get(frame) {
                Some(scene) if self.depth_train_scenes.contains(scene) => {
                    return Err(Error::Consistency(format!(
                        "validation frame {frame} belongs to depth training scene {scene}"
                    )));
                }
                Some(_) => {}
                None => {
                    return Err(Error::Consistency(format!(
                        "validation frame {frame} is not covered by the mapping"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Parse a calibration line "KEY: v0 v1 ... v11" into a camera.
pub fn parse_calibration_key(text: &str, key: &str) -> Result<CameraCalib> {
    let prefix = format!("{key}:");
    for (lineno, line) in text.lines().enumerate() {
        let Some(rest) = line.strip_prefix(&prefix) else { continue };
        let tokens: Vec<&str> = rest.split_whitespace().collect();
        if tokens.len() != 12 {
            return Err(Error::Parse {
                line: lineno + 1,
                msg: format!("{key} line has {} values, expected 12", tokens.len()),
            });
        }
        let mut vals = [0.0; 12];
        for (col, tok) in tokens.iter().enumerate() {
            vals[col] = tok.parse::<f64>().map_err(|_| Error::Parse {
                line: lineno + 1,
                msg: format!("non-numeric token {tok:?} at column {}", col + 1),
            })?;
        }
        let p = [
            [vals[0], vals[1], vals[2], vals[3]],
            [vals[4], vals[5], vals[6], vals[7]],
            [vals[8], vals[9], vals[10], vals[11]],
        ];
        return CameraCalib::from_p(p);
    }
    Err(Error::Format(format!("calibration is missing the {key:?} key")))
}

/// Parse the left rectified color camera ("P2") from a calibration file.
pub fn parse_calibration(text: &str) -> Result<CameraCalib> {
    parse_calibration_key(text, "P2")
}

/// Parse KITTI object rows: 15 fields for labels, 16 (trailing score)
/// for detections. DontCare rows are retained unvalidated.
pub fn parse_objects(text: &str, expect_score: bool) -> Result<Vec<ObjectRecord>> {
    let mut records = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let expected = if expect_score { 16 } else { 15 };
        if fields.len() != expected {
            let msg = if expect_score && fields.len() == 15 {
                "detection row is missing the trailing score".to_string()
            } else {
                format!("row has {} fields, expected {expected}", fields.len())
            };
            return Err(Error::Parse { line: lineno + 1, msg });
        }
        let num = |i: usize| -> Result<f64> {
            fields[i].parse::<f64>().map_err(|_| Error::Parse {
                line: lineno + 1,
                msg: format!("non-numeric token {:?} in field {}", fields[i], i + 1),
            })
        };
        let class_name = fields[0].to_string();
        let dontcare = class_name == "DontCare";
        let mut alpha = num(3)?;
        let mut rotation_y = num(14)?;
        if !dontcare {
            alpha = crate::geometry::wrap_angle(alpha);
            rotation_y = crate::geometry::wrap_angle(rotation_y);
        }
        records.push(ObjectRecord {
            class_name,
            truncation: num(1)?,
            occlusion: num(2)? as i32,
            alpha,
            box2d: Box2D::new(num(4)?, num(5)?, num(6)?, num(7)?),
            dims: Dimensions::new(num(8)?, num(9)?, num(10)?),
            location: Point3::new(num(11)?, num(12)?, num(13)?),
            rotation_y,
            score: if expect_score { Some(num(15)?) } else { None },
        });
    }
    Ok(records)
}

/// Write object rows in KITTI text form: 2 decimals for geometry fields
/// (devkit convention), 6 for the detection score. DontCare dims are
/// emitted as -1.
pub fn write_objects(records: &[ObjectRecord]) -> Result<String> {
    let mut out = String::new();
    for (i, r) in records.iter().enumerate() {
        if r.is_dontcare() {
            out.push_str(&format!(
                "{} {:.2} {} {:.2} {:.2} {:.2} {:.2} {:.2} -1 -1 -1 {:.2} {:.2} {:.2} {:.2}",
                r.class_name,
                r.truncation,
                r.occlusion,
                r.alpha,
                r.box2d.left,
                r.box2d.top,
                r.box2d.right,
                r.box2d.bottom,
                r.location.x,
                r.location.y,
                r.location.z,
                r.rotation_y,
            ));
        } else {
            if r.dims.h <= 0.0 || r.dims.w <= 0.0 || r.dims.l <= 0.0 {
                return Err(Error::Validation(format!(
                    "record {} ({}) has non-positive dimensions",
                    i + 1,
                    r.class_name
                )));
            }
            out.push_str(&format!(
                "{} {:.2} {} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2}",
                r.class_name,
                r.truncation,
                r.occlusion,
                r.alpha,
                r.box2d.left,
                r.box2d.top,
                r.box2d.right,
                r.box2d.bottom,
                r.dims.h,
                r.dims.w,
                r.dims.l,
                r.location.x,
                r.location.y,
                r.location.z,
                r.rotation_y,
            ));
        }
        if let Some(s) = r.score {
            out.push_str(&format!(" {s:.6}"));
        }
        out.push('\n');
    }
    Ok(out)
}

/// Decode a 16-bit single-channel raster: depth = stored / 256 m,
/// stored 0 marks an invalid pixel.
pub fn load_depth_map(raster: &[u8]) -> Result<DepthMap> {
    let img = image::load_from_memory(raster)?;
    match img {
        image::DynamicImage::ImageLuma16(im) => {
            DepthMap::from_stored_u16(im.width(), im.height(), im.as_raw())
        }
        other => Err(Error::Format(format!(
            "expected a 16-bit single-channel raster, got {:?}",
            other.color()
        ))),
    }
}

/// Split scenes so that depth training never touches a scene present in
/// the detection validation frames.
pub fn generate_depth_split(
    frame_to_scene: &BTreeMap<u32, String>,
    detection_val_frames: &BTreeSet<u32>,
) -> Result<SplitSpec> {
    let unmapped: Vec<u32> = detection_val_frames
        .iter()
        .filter(|f| !frame_to_scene.contains_key(f))
        .copied()
        .collect();
    if !unmapped.is_empty() {
        return Err(Error::Consistency(format!(
            "validation frames not present in the frame-to-scene mapping: {unmapped:?}"
        )));
    }
    let all_scenes: BTreeSet<String> = frame_to_scene.values().cloned().collect();
    let depth_val_scenes: BTreeSet<String> = detection_val_frames
        .iter()
        .map(|f| frame_to_scene[f].clone())
        .collect();
    let depth_train_scenes = all_scenes.difference(&depth_val_scenes).cloned().collect();
    Ok(SplitSpec {
        depth_train_scenes,
        depth_val_scenes,
        detection_val_frames: detection_val_frames.clone(),
    })
}

/// Parse a two-column "frame scene" mapping file.
pub fn parse_frame_scene_map(text: &str) -> Result<BTreeMap<u32, String>> {
    let mut map = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let (Some(frame), Some(scene), None) = (it.next(), it.next(), it.next()) else {
            return Err(Error::Parse {
                line: lineno + 1,
                msg: "mapping rows must have exactly two columns: frame scene".into(),
            });
        };
        let frame: u32 = frame.parse().map_err(|_| Error::Parse {
            line: lineno + 1,
            msg: format!("non-integer frame index {frame:?}"),
        })?;
        map.insert(frame, scene.to_string());
    }
    Ok(map)
}

/// Parse a file with one frame index per line.
pub fn parse_frame_list(text: &str) -> Result<BTreeSet<u32>> {
    let mut set = BTreeSet::new();
    for (lineno, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        set.insert(t.parse().map_err(|_| Error::Parse {
            line: lineno + 1,
            msg: format!("non-integer frame index {t:?}"),
        })?);
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn parse_calibration_reads_intrinsics() {
        let c = parse_calibration("P2: 700 0 600 0 0 700 180 0 0 0 1 0").unwrap();
        assert_relative_eq!(c.fx, 700.0);
        assert_relative_eq!(c.cx, 600.0);
        assert_relative_eq!(c.fy, 700.0);
        assert_relative_eq!(c.cy, 180.0);
        assert_relative_eq!(c.tx, 0.0);
    }

    #[test]
    fn parse_calibration_reads_baseline() {
        let c = parse_calibration("P0: 1 0 0 0 0 1 0 0 0 0 1 0\nP2: 700 0 600 45 0 700 180 0 0 0 1 0").unwrap();
        assert_relative_eq!(c.tx, 45.0);
    }

    #[test]
    fn parse_calibration_missing_key() {
        let err = parse_calibration("P0: 1 0 0 0 0 1 0 0 0 0 1 0").unwrap_err();
        assert!(err.to_string().contains("P2"));
    }

    #[test]
    fn parse_calibration_bad_token_reports_position() {
        let err = parse_calibration("P2: 700 0 x 0 0 700 180 0 0 0 1 0").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 1") && msg.contains("column 3"), "{msg}");
    }

    const LABEL_ROW: &str = "Car 0.00 0 -1.57 100 150 300 250 1.5 1.6 3.9 2.0 1.5 20.0 -1.47";

    #[test]
    fn parse_objects_label_row() {
        let rs = parse_objects(LABEL_ROW, false).unwrap();
        assert_eq!(rs.len(), 1);
        let r = &rs[0];
        assert_eq!(r.class_name, "Car");
        assert_relative_eq!(r.alpha, -1.57);
        assert_relative_eq!(r.location.z, 20.0);
        assert_relative_eq!(r.rotation_y, -1.47);
        assert_eq!(r.score, None);
    }

    #[test]
    fn parse_objects_with_score() {
        let row = format!("{LABEL_ROW} 0.93");
        let rs = parse_objects(&row, true).unwrap();
        assert_eq!(rs[0].score, Some(0.93));
    }

    #[test]
    fn parse_objects_field_count_errors() {
        assert!(parse_objects("Car 0.00 0 -1.57 100 150 300 250 1.5 1.6 3.9 2.0 1.5 20.0", false).is_err());
        // score expected but missing
        let err = parse_objects(LABEL_ROW, true).unwrap_err();
        assert!(err.to_string().contains("score"));
    }

    #[test]
    fn parse_objects_keeps_dontcare() {
        let row = "DontCare -1 -1 -10 503.89 169.71 590.61 190.13 -1 -1 -1 -1000 -1000 -1000 -10";
        let rs = parse_objects(row, false).unwrap();
        assert!(rs[0].is_dontcare());
        assert_relative_eq!(rs[0].alpha, -10.0); // unvalidated, not wrapped
    }

    #[test]
    fn write_objects_round_trips() {
        let text = format!("{LABEL_ROW}\nDontCare -1 -1 -10.00 503.89 169.71 590.61 190.13 -1 -1 -1 -1000.00 -1000.00 -1000.00 -10.00\n");
        let parsed = parse_objects(&text, false).unwrap();
        let written = write_objects(&parsed).unwrap();
        let reparsed = parse_objects(&written, false).unwrap();
        assert_eq!(parsed, reparsed);
        // byte-stable after one write/parse cycle
        assert_eq!(written, write_objects(&reparsed).unwrap());
    }

    #[test]
    fn write_objects_empty_and_invalid() {
        assert_eq!(write_objects(&[]).unwrap(), "");
        let mut r = parse_objects(LABEL_ROW, false).unwrap().remove(0);
        r.dims.h = -1.0;
        assert!(matches!(write_objects(&[r]), Err(Error::Validation(_))));
    }

    #[test]
    fn dontcare_dims_written_as_minus_one() {
        let rs = parse_objects(
            "DontCare -1 -1 -10 0 0 10 10 -1 -1 -1 -1000 -1000 -1000 -10",
            false,
        )
        .unwrap();
        let line = write_objects(&rs).unwrap();
        assert!(line.contains(" -1 -1 -1 "), "{line}");
    }

    #[test]
    fn depth_map_conversion() {
        let dm = DepthMap::from_stored_u16(2, 1, &[256, 0]).unwrap();
        assert_relative_eq!(dm.get(0, 0).unwrap(), 1.0);
        assert_eq!(dm.get(1, 0), None); // stored 0 is invalid, never depth 0
        let dm = DepthMap::from_stored_u16(1, 1, &[65535]).unwrap();
        assert_relative_eq!(dm.get(0, 0).unwrap(), 65535.0 / 256.0);
    }

    #[test]
    fn load_depth_map_png() {
        let mut buf = std::io::Cursor::new(Vec::new());
        let img = image::ImageBuffer::<image::Luma<u16>, _>::from_raw(2, 2, vec![0u16, 256, 512, 1024]).unwrap();
        image::DynamicImage::ImageLuma16(img)
            .write_to(&mut buf, image::ImageFormat::Png)
            .unwrap();
        let dm = load_depth_map(buf.get_ref()).unwrap();
        assert_eq!(dm.get(0, 0), None);
        assert_relative_eq!(dm.get(1, 0).unwrap(), 1.0);
        assert_relative_eq!(dm.get(1, 1).unwrap(), 4.0);

        // 8-bit rasters are rejected
        let mut buf8 = std::io::Cursor::new(Vec::new());
        let img8 = image::ImageBuffer::<image::Luma<u8>, _>::from_raw(1, 1, vec![7u8]).unwrap();
        image::DynamicImage::ImageLuma8(img8)
            .write_to(&mut buf8, image::ImageFormat::Png)
            .unwrap();
        assert!(load_depth_map(buf8.get_ref()).is_err());
    }

    fn mapping(pairs: &[(u32, &str)]) -> BTreeMap<u32, String> {
        pairs.iter().map(|(f, s)| (*f, s.to_string())).collect()
    }

    #[test]
    fn depth_split_excludes_validation_scenes() {
        let map = mapping(&[(0, "A"), (1, "A"), (2, "B"), (3, "C"), (4, "C")]);
        let val: BTreeSet<u32> = [3, 4].into_iter().collect();
        let split = generate_depth_split(&map, &val).unwrap();
        assert_eq!(split.depth_val_scenes, ["C".to_string()].into_iter().collect());
        assert_eq!(
            split.depth_train_scenes,
            ["A".to_string(), "B".to_string()].into_iter().collect()
        );
        split.check_leakage(&map).unwrap();
    }

    #[test]
    fn depth_split_degenerate_and_multi_scene() {
        let map = mapping(&[(0, "A"), (1, "B"), (2, "C")]);
        let all: BTreeSet<u32> = [0, 1, 2].into_iter().collect();
        let split = generate_depth_split(&map, &all).unwrap();
        assert!(split.depth_train_scenes.is_empty());

        let val: BTreeSet<u32> = [0, 2].into_iter().collect();
        let split = generate_depth_split(&map, &val).unwrap();
        assert_eq!(split.depth_train_scenes, ["B".to_string()].into_iter().collect());
    }

    #[test]
    fn depth_split_unmapped_frame_errors() {
        let map = mapping(&[(0, "A")]);
        let val: BTreeSet<u32> = [5].into_iter().collect();
        let err = generate_depth_split(&map, &val).unwrap_err();
        assert!(err.to_string().contains('5'));
    }
}
