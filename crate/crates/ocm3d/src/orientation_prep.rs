//! Shape-retaining patch preparation for orientation estimation, plus the
//! MultiBin observation-angle encode/decode protocol.
//!
//! Shape-retaining resize scales to fit the larger edge while keeping the
//! aspect ratio, then zero-pads symmetrically; naive resize (kept for
//! comparison) stretches and makes the observation angle ambiguous.

use std::f64::consts::TAU;

use crate::geometry::wrap_angle;

/// Default MultiBin bin count.
pub const DEFAULT_N_BINS: usize = 2;

/// Dense RGB pixel grid in [0, 1], row-major h x w x 3.
#[derive(Debug, Clone)]
pub struct Patch {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f64>,
}

impl Patch {
    pub fn new(width: usize, height: usize) -> Patch {
        assert!(width >= 1 && height >= 1);
        Patch { width, height, pixels: vec![0.0; width * height * 3] }
    }

    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn set(&mut self, x: usize, y: usize, rgb: [f64; 3]) {
        let i = (y * self.width + x) * 3;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }
}

/// Bookkeeping to invert a shape-retaining resize.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResizeTransform {
    pub scale: f64,
    pub pad_left: usize,
    pub pad_top: usize,
    pub content_width: usize,
    pub content_height: usize,
}

fn bilinear_sample(src: &Patch, x: f64, y: f64) -> [f64; 3] {
    let clamp = |v: f64, hi: usize| v.clamp(0.0, (hi - 1) as f64);
    let x = clamp(x, src.width);
    let y = clamp(y, src.height);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(src.width - 1);
    let y1 = (y0 + 1).min(src.height - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let mut out = [0.0; 3];
    let (p00, p10, p01, p11) = (src.get(x0, y0), src.get(x1, y0), src.get(x0, y1), src.get(x1, y1));
    for c in 0..3 {
        let top = p00[c] * (1.0 - fx) + p10[c] * fx;
        let bot = p01[c] * (1.0 - fx) + p11[c] * fx;
        out[c] = top * (1.0 - fy) + bot * fy;
    }
    out
}

/// Bilinear resample to an exact target size (half-pixel-center convention).
pub fn naive_resize(patch: &Patch, target: (usize, usize)) -> Patch {
    let (tw, th) = target;
    let mut out = Patch::new(tw, th);
    let sx = patch.width as f64 / tw as f64;
    let sy = patch.height as f64 / th as f64;
    for y in 0..th {
        for x in 0..tw {
            let src_x = (x as f64 + 0.5) * sx - 0.5;
            let src_y = (y as f64 + 0.5) * sy - 0.5;
            out.set(x, y, bilinear_sample(patch, src_x, src_y));
        }
    }
    out
}

/// Aspect-ratio-preserving resize to fit the target, with the content
/// centered and the border zero-filled. An odd pad remainder goes to the
/// right/bottom.
pub fn shape_retaining_resize(patch: &Patch, target: (usize, usize)) -> (Patch, ResizeTransform) {
    let (tw, th) = target;
    assert!(tw >= 1 && th >= 1);
    let scale = (tw as f64 / patch.width as f64).min(th as f64 / patch.height as f64);
    let cw = ((patch.width as f64 * scale).round() as usize).clamp(1, tw);
    let ch = ((patch.height as f64 * scale).round() as usize).clamp(1, th);
    let content = naive_resize(patch, (cw, ch));
    let pad_left = (tw - cw) / 2;
    let pad_top = (th - ch) / 2;
    let mut out = Patch::new(tw, th);
    for y in 0..ch {
        for x in 0..cw {
            out.set(x + pad_left, y + pad_top, content.get(x, y));
        }
    }
    (
        out,
        ResizeTransform { scale, pad_left, pad_top, content_width: cw, content_height: ch },
    )
}

/// MultiBin encoding of an observation angle: nearest of `n_bins` centers
/// at 2 pi k / n plus a wrapped residual.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinEncoding {
    pub n_bins: usize,
    pub bin_index: usize,
    pub residual: f64,
}

pub fn bin_center(bin_index: usize, n_bins: usize) -> f64 {
    wrap_angle(TAU * bin_index as f64 / n_bins as f64)
}

/// Encode: bin with the smallest wrapped distance to alpha, ties to the
/// lower index.
pub fn multibin_encode(alpha: f64, n_bins: usize) -> BinEncoding {
    assert!(n_bins >= 2, "MultiBin needs at least two bins");
    let mut best = 0usize;
    let mut best_abs = f64::INFINITY;
    let mut best_residual = 0.0;
    for k in 0..n_bins {
        let residual = wrap_angle(alpha - bin_center(k, n_bins));
        if residual.abs() < best_abs {
            best_abs = residual.abs();
            best = k;
            best_residual = residual;
        }
    }
    BinEncoding { n_bins, bin_index: best, residual: best_residual }
}

/// Decode: wrapped(center + residual).
pub fn multibin_decode(enc: &BinEncoding) -> f64 {
    wrap_angle(bin_center(enc.bin_index, enc.n_bins) + enc.residual)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn gradient_patch(w: usize, h: usize) -> Patch {
        let mut p = Patch::new(w, h);
        for y in 0..h {
            for x in 0..w {
                let v = (x + y * w) as f64 / (w * h) as f64;
                p.set(x, y, [v, 1.0 - v, 0.5]);
            }
        }
        p
    }

    #[test]
    fn tall_patch_pads_left_right() {
        // 50x100 -> 224x224: content 112x224, pad 56 each side, none top/bottom
        let patch = gradient_patch(50, 100);
        let (out, t) = shape_retaining_resize(&patch, (224, 224));
        assert_eq!((out.width, out.height), (224, 224));
        assert_eq!((t.content_width, t.content_height), (112, 224));
        assert_eq!((t.pad_left, t.pad_top), (56, 0));
        // padding is actually zero
        assert_eq!(out.get(0, 100), [0.0; 3]);
        assert_eq!(out.get(223, 100), [0.0; 3]);
        assert_ne!(out.get(112, 100), [0.0; 3]);
    }

    #[test]
    fn square_patch_needs_no_padding() {
        let patch = gradient_patch(64, 64);
        let (out, t) = shape_retaining_resize(&patch, (224, 224));
        assert_eq!((t.pad_left, t.pad_top), (0, 0));
        assert_eq!((t.content_width, t.content_height), (224, 224));
        assert_eq!((out.width, out.height), (224, 224));
    }

    #[test]
    fn aspect_ratio_preserved_within_rounding() {
        let sizes = [(30, 70), (99, 41), (17, 17), (200, 31), (5, 301)];
        for (w, h) in sizes {
            let patch = gradient_patch(w, h);
            let (_, t) = shape_retaining_resize(&patch, (224, 224));
            let original = w as f64 / h as f64;
            let resized = t.content_width as f64 / t.content_height as f64;
            // at most 1 px of rounding on either edge
            let worst = ((t.content_width as f64 + 1.0) / t.content_height as f64 - original)
                .abs()
                .max((t.content_width as f64 / (t.content_height as f64 + 1.0) - original).abs());
            assert!(
                (resized - original).abs() <= worst + 1e-9,
                "{w}x{h}: {resized} vs {original}"
            );
        }
    }

    #[test]
    fn padding_symmetric_within_one_pixel() {
        let patch = gradient_patch(50, 100);
        let (_, t) = shape_retaining_resize(&patch, (225, 224));
        let pad_right = 225 - t.content_width - t.pad_left;
        assert!(pad_right as i64 - t.pad_left as i64 <= 1);
        assert!(pad_right >= t.pad_left); // remainder goes right
    }

    #[test]
    fn naive_resize_distorts_two_to_one_fixture() {
        let patch = gradient_patch(50, 100);
        let naive = naive_resize(&patch, (224, 224));
        assert_eq!((naive.width, naive.height), (224, 224));
        // naive output is square: the 2:1 content ratio is destroyed,
        // shape-retaining keeps it
        let (_, t) = shape_retaining_resize(&patch, (224, 224));
        assert_eq!(t.content_width * 2, t.content_height);
    }

    #[test]
    fn multibin_hand_cases() {
        let e = multibin_encode(0.0, 2);
        assert_eq!(e.bin_index, 0);
        assert_relative_eq!(e.residual, 0.0);

        let e = multibin_encode(PI, 2);
        assert_eq!(e.bin_index, 1);
        assert_relative_eq!(e.residual, 0.0);
        assert_relative_eq!(multibin_decode(&e), PI);

        // pi/3 is nearer to center 0 than to pi
        let e = multibin_encode(PI / 3.0, 2);
        assert_eq!(e.bin_index, 0);
        assert_relative_eq!(e.residual, PI / 3.0);
    }

    #[test]
    fn multibin_round_trip() {
        for n_bins in [2usize, 4, 8] {
            for i in 0..1000 {
                let alpha = wrap_angle(-PI + TAU * (i as f64 + 0.5) / 1000.0);
                let dec = multibin_decode(&multibin_encode(alpha, n_bins));
                assert!(
                    (wrap_angle(dec - alpha)).abs() < 1e-9,
                    "n={n_bins} alpha={alpha} dec={dec}"
                );
            }
        }
    }

    #[test]
    fn multibin_edge_residuals_consistent() {
        // exactly between centers 0 and pi: |residual| = pi/2 for both
        // candidates; the tie goes to the lower bin index
        let e = multibin_encode(PI / 2.0, 2);
        assert_eq!(e.bin_index, 0);
        assert_relative_eq!(e.residual, PI / 2.0);
        // a residual past the bin edge still decodes into adjacent territory
        let forced = BinEncoding { n_bins: 2, bin_index: 0, residual: PI / 2.0 + 0.1 };
        let dec = multibin_decode(&forced);
        let canonical = multibin_encode(dec, 2);
        assert_eq!(canonical.bin_index, 1);
        assert_relative_eq!(wrap_angle(dec - PI / 2.0 - 0.1), 0.0, epsilon = 1e-12);
    }
}
