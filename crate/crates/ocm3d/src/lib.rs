//! Deterministic building blocks of an object-centric monocular 3D detection
//! pipeline: KITTI-format I/O, camera geometry and rotated-box IoU, adaptive
//! object-centric voxelization, 3D center heatmap targets, shape-retaining
//! patch preparation, decomposed 2D→3D confidence rescoring, and the full
//! BEV/3D/AOS average-precision evaluation protocol.

pub mod confidence;
pub mod container;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod heatmap;
pub mod kitti_io;
pub mod orientation_prep;
pub mod voxelizer;

pub use error::{Error, Result};
