//! Pixel-level attribution maps for one explained class.
//!
//! Both strategies start from the same per-prototype similarity maps and
//! class weights. The box strategy upsamples each map, finds the tight
//! bounding box of its high-similarity region, and paints the box with
//! the prototype's weighted peak activation. The summed strategy adds
//! the weighted upsampled maps pixel by pixel. Either way, per-pixel
//! accumulation is compensated, so prototype order cannot move a value
//! by more than cancellation noise.

use crate::error::{Error, Result};
use crate::grid::{Dtype, GridData, PgrdGrid};
use crate::protonet::SimilarityMap;

/// Dense per-pixel attribution for one class.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributionGrid {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl AttributionGrid {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, values: vec![0.0; rows * cols] }
    }

    pub fn value(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }

    pub fn total(&self) -> f64 {
        crate::grid::kahan_sum(self.values.iter().copied())
    }

    pub fn to_pgrd(&self) -> PgrdGrid {
        let data: Vec<f32> = self.values.iter().map(|&v| v as f32).collect();
        PgrdGrid::new(self.rows, self.cols, 1, GridData::F32(data))
            .expect("length matches by construction")
    }

    pub fn from_pgrd(grid: &PgrdGrid) -> Result<Self> {
        if grid.channels != 1 || grid.data.dtype() != Dtype::F32 {
            return Err(Error::GridFormat(format!(
                "attribution grid must be 1-channel f32, got {} channels {:?}",
                grid.channels,
                grid.data.dtype()
            )));
        }
        let GridData::F32(ref data) = grid.data else { unreachable!() };
        Ok(Self {
            rows: grid.rows,
            cols: grid.cols,
            values: data.iter().map(|&v| v as f64).collect(),
        })
    }
}

/// Inclusive pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PrototypeBox {
    pub top: usize,
    pub left: usize,
    pub bottom: usize,
    pub right: usize,
}

impl PrototypeBox {
    pub fn contains(&self, r: usize, c: usize) -> bool {
        r >= self.top && r <= self.bottom && c >= self.left && c <= self.right
    }
}

/// Bilinear upsampling of a patch-grid map to pixel resolution.
///
/// Grid cell (gr, gc) is anchored at the center of its patch, pixel
/// position (gr*stride + (patch-1)/2, ...); pixels beyond the outer
/// anchors take the edge value. Every output lies within the input's
/// min and max.
pub fn upsample_map(map: &SimilarityMap, rows: usize, cols: usize) -> Result<AttributionGrid> {
    if map.grid_rows == 0 || map.grid_cols == 0 {
        return Err(Error::Dimension("cannot upsample an empty map".into()));
    }
    let offset_r = (map.patch - 1) as f64 / 2.0;
    let offset_c = offset_r;
    let stride = map.stride as f64;
    let mut out = AttributionGrid::zeros(rows, cols);
    for r in 0..rows {
        let u = ((r as f64 - offset_r) / stride).clamp(0.0, (map.grid_rows - 1) as f64);
        let i0 = u.floor() as usize;
        let i1 = (i0 + 1).min(map.grid_rows - 1);
        let fu = u - i0 as f64;
        for c in 0..cols {
            let v = ((c as f64 - offset_c) / stride).clamp(0.0, (map.grid_cols - 1) as f64);
            let j0 = v.floor() as usize;
            let j1 = (j0 + 1).min(map.grid_cols - 1);
            let fv = v - j0 as f64;
            let interpolated = (1.0 - fu) * (1.0 - fv) * map.value(i0, j0)
                + (1.0 - fu) * fv * map.value(i0, j1)
                + fu * (1.0 - fv) * map.value(i1, j0)
                + fu * fv * map.value(i1, j1);
            out.values[r * cols + c] = interpolated;
        }
    }
    Ok(out)
}

/// Nearest-rank quantile of the grid's values.
fn quantile(values: &[f64], p: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("attribution values are finite"));
    let n = sorted.len();
    let idx = ((p * (n - 1) as f64).ceil() as usize).min(n - 1);
    sorted[idx]
}

/// Tight bounding box of the pixels at or above the given quantile of
/// the map's own values.
pub fn extract_box(att: &AttributionGrid, percentile: f64) -> Result<PrototypeBox> {
    if att.values.is_empty() {
        return Err(Error::Dimension("cannot box an empty grid".into()));
    }
    if !(0.0..=1.0).contains(&percentile) {
        return Err(Error::Config(format!(
            "box percentile must be in [0, 1], got {percentile}"
        )));
    }
    let tau = quantile(&att.values, percentile);
    let mut top = usize::MAX;
    let mut left = usize::MAX;
    let mut bottom = 0usize;
    let mut right = 0usize;
    for r in 0..att.rows {
        for c in 0..att.cols {
            if att.value(r, c) >= tau {
                top = top.min(r);
                left = left.min(c);
                bottom = bottom.max(r);
                right = right.max(c);
            }
        }
    }
    // tau is attained by at least one pixel, so the box is non-degenerate
    Ok(PrototypeBox { top, left, bottom, right })
}

/// Compensated per-pixel accumulator.
struct KahanGrid {
    sum: Vec<f64>,
    comp: Vec<f64>,
}

impl KahanGrid {
    fn new(len: usize) -> Self {
        Self { sum: vec![0.0; len], comp: vec![0.0; len] }
    }

    fn add(&mut self, idx: usize, value: f64) {
        let y = value - self.comp[idx];
        let t = self.sum[idx] + y;
        self.comp[idx] = (t - self.sum[idx]) - y;
        self.sum[idx] = t;
    }
}

fn check_inputs(maps: &[SimilarityMap], weights: &[f64]) -> Result<()> {
    if maps.len() != weights.len() {
        return Err(Error::Dimension(format!(
            "{} similarity maps but {} weights",
            maps.len(),
            weights.len()
        )));
    }
    Ok(())
}

/// Box-style attribution: each prototype paints its bounding box with
/// its weighted peak activation. Negative-weight prototypes paint
/// nothing, and the painted value is never negative.
pub fn bb_attribution(
    maps: &[SimilarityMap],
    weights: &[f64],
    rows: usize,
    cols: usize,
    box_percentile: f64,
) -> Result<AttributionGrid> {
    check_inputs(maps, weights)?;
    let mut acc = KahanGrid::new(rows * cols);
    for (map, &w) in maps.iter().zip(weights) {
        let up = upsample_map(map, rows, cols)?;
        let peak = up.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let fill = (peak * w).max(0.0);
        if fill == 0.0 {
            continue;
        }
        let bbox = extract_box(&up, box_percentile)?;
        for r in bbox.top..=bbox.bottom {
            for c in bbox.left..=bbox.right {
                acc.add(r * cols + c, fill);
            }
        }
    }
    Ok(AttributionGrid { rows, cols, values: acc.sum })
}

/// Summed-map attribution: weighted upsampled similarity maps added per
/// pixel, negative totals clamped to zero after the sum.
pub fn ssm_attribution(
    maps: &[SimilarityMap],
    weights: &[f64],
    rows: usize,
    cols: usize,
) -> Result<AttributionGrid> {
    check_inputs(maps, weights)?;
    let mut acc = KahanGrid::new(rows * cols);
    for (map, &w) in maps.iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        let up = upsample_map(map, rows, cols)?;
        for (idx, &v) in up.values.iter().enumerate() {
            acc.add(idx, w * v);
        }
    }
    let values = acc.sum.into_iter().map(|v| v.max(0.0)).collect();
    Ok(AttributionGrid { rows, cols, values })
}
