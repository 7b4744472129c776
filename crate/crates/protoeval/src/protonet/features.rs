//! Patch feature extraction.
//!
//! Each patch is described by 14 numbers: per-channel mean and variance,
//! plus an 8-bin gradient orientation histogram. Every term is computed
//! strictly from the patch's own pixels, so a part shifted by exactly one
//! stride produces the same feature at the shifted grid cell.

use crate::error::{Error, Result};
use crate::grid::ImageBuffer;

pub const FEATURE_DIM: usize = 14;
const HIST_BINS: usize = 8;

/// Uniform gain on every feature dimension. Identical patches stay at
/// distance zero while non-matching patches move far apart, keeping the
/// log-similarity of a mismatch two orders of magnitude below a match's
/// peak, the regime prototype scoring assumes.
pub const FEATURE_GAIN: f64 = 4.0;

/// Dense per-patch feature vectors on a regular grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrid {
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub patch: usize,
    pub stride: usize,
    data: Vec<f64>,
}

impl FeatureGrid {
    pub fn feature(&self, grid_row: usize, grid_col: usize) -> &[f64] {
        let base = (grid_row * self.grid_cols + grid_col) * FEATURE_DIM;
        &self.data[base..base + FEATURE_DIM]
    }

    pub fn n_patches(&self) -> usize {
        self.grid_rows * self.grid_cols
    }

    /// Pixel rectangle covered by a patch: (row0, col0, rows, cols).
    pub fn patch_rect(&self, grid_row: usize, grid_col: usize) -> (usize, usize, usize, usize) {
        (grid_row * self.stride, grid_col * self.stride, self.patch, self.patch)
    }
}

fn luminance(px: [f32; 3]) -> f64 {
    0.299 * px[0] as f64 + 0.587 * px[1] as f64 + 0.114 * px[2] as f64
}

/// Feature vector of the patch whose top-left pixel is (row0, col0).
pub fn patch_feature(image: &ImageBuffer, row0: usize, col0: usize, patch: usize) -> Vec<f64> {
    let mut out = vec![0.0f64; FEATURE_DIM];
    let area = (patch * patch) as f64;

    // per-channel mean
    for r in row0..row0 + patch {
        for c in col0..col0 + patch {
            let px = image.get(r, c);
            for ch in 0..3 {
                out[ch] += px[ch] as f64;
            }
        }
    }
    for ch in 0..3 {
        out[ch] /= area;
    }

    // per-channel variance, second pass against the mean
    for r in row0..row0 + patch {
        for c in col0..col0 + patch {
            let px = image.get(r, c);
            for ch in 0..3 {
                let d = px[ch] as f64 - out[ch];
                out[3 + ch] += d * d;
            }
        }
    }
    for ch in 0..3 {
        out[3 + ch] /= area;
    }

    // gradient orientation histogram over the patch interior, central
    // differences only touch pixels inside the patch
    if patch >= 3 {
        let lum = |r: usize, c: usize| luminance(image.get(row0 + r, col0 + c));
        for r in 1..patch - 1 {
            for c in 1..patch - 1 {
                let gx = lum(r, c + 1) - lum(r, c - 1);
                let gy = lum(r + 1, c) - lum(r - 1, c);
                let mag = (gx * gx + gy * gy).sqrt();
                if mag > 0.0 {
                    let angle = gy.atan2(gx);
                    let bin = (((angle + std::f64::consts::PI)
                        / (2.0 * std::f64::consts::PI / HIST_BINS as f64))
                        .floor() as usize)
                        .min(HIST_BINS - 1);
                    out[6 + bin] += mag;
                }
            }
        }
        for bin in 0..HIST_BINS {
            out[6 + bin] /= area;
        }
    }

    for v in &mut out {
        *v *= FEATURE_GAIN;
    }
    out
}

/// Slide a patch window over the image and featurize every position.
pub fn extract_features(image: &ImageBuffer, patch: usize, stride: usize) -> Result<FeatureGrid> {
    if patch == 0 || stride == 0 {
        return Err(Error::Dimension("patch and stride must be positive".into()));
    }
    if patch > image.rows || patch > image.cols {
        return Err(Error::Dimension(format!(
            "patch {patch} exceeds image dims {}x{}",
            image.rows, image.cols
        )));
    }
    let grid_rows = (image.rows - patch) / stride + 1;
    let grid_cols = (image.cols - patch) / stride + 1;
    let mut data = Vec::with_capacity(grid_rows * grid_cols * FEATURE_DIM);
    for gr in 0..grid_rows {
        for gc in 0..grid_cols {
            data.extend_from_slice(&patch_feature(image, gr * stride, gc * stride, patch));
        }
    }
    Ok(FeatureGrid { grid_rows, grid_cols, patch, stride, data })
}
