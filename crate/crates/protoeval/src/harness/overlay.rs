//! Visual overlays: attribution heat over the scene, part outlines on
//! top.
//!
//! Rendering is pure pixel arithmetic. A zero attribution map with
//! outlines disabled reproduces the scene image byte for byte, which
//! keeps the encoder honest in tests.

use std::io::Cursor;

use image::{ImageFormat, Rgb, RgbImage};

use crate::attribution::AttributionGrid;
use crate::error::{Error, Result};
use crate::scenegen::Scene;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverlayOptions {
    /// Peak opacity of the heat layer, in [0, 1].
    pub alpha: f64,
    /// Trace each part mask's boundary in white.
    pub outlines: bool,
}

impl Default for OverlayOptions {
    fn default() -> Self {
        Self { alpha: 0.6, outlines: true }
    }
}

/// Five-stop gradient from deep violet to yellow.
const STOPS: [[f64; 3]; 5] = [
    [68.0, 1.0, 84.0],
    [59.0, 82.0, 139.0],
    [33.0, 145.0, 140.0],
    [94.0, 201.0, 98.0],
    [253.0, 231.0, 37.0],
];

fn colormap(v: f64) -> [f64; 3] {
    let x = v.clamp(0.0, 1.0) * (STOPS.len() - 1) as f64;
    let i = (x.floor() as usize).min(STOPS.len() - 2);
    let f = x - i as f64;
    let mut out = [0.0; 3];
    for ch in 0..3 {
        out[ch] = STOPS[i][ch] * (1.0 - f) + STOPS[i + 1][ch] * f;
    }
    out
}

fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Blend the attribution heat over the scene and trace part outlines.
pub fn render_overlay(
    scene: &Scene,
    att: &AttributionGrid,
    options: &OverlayOptions,
) -> Result<RgbImage> {
    if att.rows != scene.image.rows || att.cols != scene.image.cols {
        return Err(Error::Dimension(format!(
            "attribution {}x{} does not match scene {}x{}",
            att.rows, att.cols, scene.image.rows, scene.image.cols
        )));
    }
    if !(0.0..=1.0).contains(&options.alpha) {
        return Err(Error::Config(format!(
            "overlay alpha must be in [0, 1], got {}",
            options.alpha
        )));
    }
    let peak = att.values.iter().copied().fold(0.0f64, f64::max);
    let rows = att.rows;
    let cols = att.cols;
    let mut out = RgbImage::new(cols as u32, rows as u32);
    for r in 0..rows {
        for c in 0..cols {
            let px = scene.image.get(r, c);
            let base = [to_u8(px[0]), to_u8(px[1]), to_u8(px[2])];
            let heat = if peak > 0.0 { (att.value(r, c) / peak).max(0.0) } else { 0.0 };
            let w = options.alpha * heat;
            let rgb = if w == 0.0 {
                base
            } else {
                let cm = colormap(heat);
                [
                    (base[0] as f64 * (1.0 - w) + cm[0] * w).round() as u8,
                    (base[1] as f64 * (1.0 - w) + cm[1] * w).round() as u8,
                    (base[2] as f64 * (1.0 - w) + cm[2] * w).round() as u8,
                ]
            };
            out.put_pixel(c as u32, r as u32, Rgb(rgb));
        }
    }
    if options.outlines {
        for mask in scene.part_masks.values() {
            for r in 0..rows {
                for c in 0..cols {
                    if !mask.get(r, c) {
                        continue;
                    }
                    let at_border = r == 0 || c == 0 || r + 1 == rows || c + 1 == cols;
                    let interior = !at_border
                        && mask.get(r - 1, c)
                        && mask.get(r + 1, c)
                        && mask.get(r, c - 1)
                        && mask.get(r, c + 1);
                    if !interior {
                        out.put_pixel(c as u32, r as u32, Rgb([255, 255, 255]));
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Encode an overlay to PNG bytes.
pub fn overlay_png_bytes(
    scene: &Scene,
    att: &AttributionGrid,
    options: &OverlayOptions,
) -> Result<Vec<u8>> {
    let img = render_overlay(scene, att, options)?;
    let mut bytes = Vec::new();
    img.write_to(&mut Cursor::new(&mut bytes), ImageFormat::Png)
        .map_err(|e| Error::Render(format!("png encoding failed: {e}")))?;
    Ok(bytes)
}
