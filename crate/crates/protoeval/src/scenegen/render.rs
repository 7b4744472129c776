//! Procedural scene rendering: anchor layout, part shapes, background
//! texture.
//!
//! Every part slot owns one cell of an n-by-n anchor grid, so placements
//! of distinct slots can never overlap and a slot's placement does not
//! depend on which other slots are present. The background is a pure
//! per-pixel hash of `(background_seed, row, col, channel)`, which makes
//! part deletion and re-rendering with the part absent bit-identical.

use crate::error::{Error, Result};
use crate::grid::{ImageBuffer, Mask};
use crate::seeds;

use super::{BackgroundSpec, ClassSpec, PartAssignment, PartVocabulary, Scene, Shape};

/// Background color at one pixel, in f32 like the stored image.
pub fn background_pixel(spec: &BackgroundSpec, seed: u64, r: usize, c: usize) -> [f32; 3] {
    let mut out = [0.0f32; 3];
    for (ch, slot) in out.iter_mut().enumerate() {
        let key = ((r as u64) << 40) | ((c as u64) << 16) | ch as u64;
        let u = seeds::unit_f64(seeds::mix(seed, key));
        let v = spec.base[ch] as f64 + spec.amplitude as f64 * (2.0 * u - 1.0);
        *slot = v.clamp(0.0, 1.0) as f32;
    }
    out
}

/// Fill an entire image with background texture.
pub fn paint_background(spec: &BackgroundSpec, seed: u64, rows: usize, cols: usize) -> ImageBuffer {
    let mut img = ImageBuffer::filled(rows, cols, [0.0; 3]);
    for r in 0..rows {
        for c in 0..cols {
            img.set(r, c, background_pixel(spec, seed, r, c));
        }
    }
    img
}

/// One slot's anchor cell: the pixel rectangle it may draw into.
#[derive(Debug, Clone, Copy)]
pub struct AnchorCell {
    pub row0: usize,
    pub col0: usize,
    pub rows: usize,
    pub cols: usize,
}

/// Cell visit order for an n-by-n grid: center-out, so small slot
/// counts form one compact body with background around it, the way a
/// photographed subject sits in a frame.
fn cell_order(n: usize) -> Vec<(usize, usize)> {
    let mid = (n as f64 - 1.0) / 2.0;
    let mut cells: Vec<(usize, usize)> = (0..n)
        .flat_map(|r| (0..n).map(move |c| (r, c)))
        .collect();
    cells.sort_by(|a, b| {
        let d = |&(r, c): &(usize, usize)| {
            let dr = r as f64 - mid;
            let dc = c as f64 - mid;
            dr * dr + dc * dc
        };
        d(a).partial_cmp(&d(b)).unwrap().then(a.cmp(b))
    });
    cells
}

/// Smallest grid side that fits `n_slots` cells, preferring one that
/// divides both canvas dimensions exactly. Uniform cells leave no
/// remainder strip at the edges and give every slot the same usable
/// area, so no slot is systematically cramped.
fn grid_side(rows: usize, cols: usize, n_slots: usize) -> usize {
    let base = (n_slots as f64).sqrt().ceil() as usize;
    (base..=rows.min(cols))
        .find(|n| rows % n == 0 && cols % n == 0 && rows.min(cols) / n >= 8)
        .unwrap_or(base)
}

/// Compute the anchor layout for `n_slots` slots on a rows-by-cols canvas.
pub fn anchor_layout(rows: usize, cols: usize, n_slots: usize) -> Result<Vec<AnchorCell>> {
    if rows < 16 || cols < 16 {
        return Err(Error::Dimension(format!(
            "image dims {rows}x{cols} below the 16x16 minimum"
        )));
    }
    let n = grid_side(rows, cols, n_slots);
    let cell_h = rows / n;
    let cell_w = cols / n;
    let order = cell_order(n);
    Ok(order
        .into_iter()
        .take(n_slots)
        .map(|(r, c)| AnchorCell {
            row0: r * cell_h,
            col0: c * cell_w,
            rows: cell_h,
            cols: cell_w,
        })
        .collect())
}

/// Placement geometry shared by rendering and part swapping.
pub struct Placement {
    pub center_r: f64,
    pub center_c: f64,
    pub radius: f64,
}

/// Maximum jitter (pixels) for a cell of the given size.
fn jitter_budget(cell: usize) -> i64 {
    ((cell as f64) * 0.1).floor().min(3.0) as i64
}

/// Deterministic placement of one slot's part inside its anchor cell.
///
/// The jitter stream depends only on `(scene_seed, slot, attempt)`, never
/// on which other slots are present.
pub fn place_part(
    cell: &AnchorCell,
    slot: &str,
    size_frac: f64,
    scene_seed: u64,
    attempt: u64,
) -> Result<Placement> {
    let min_cell = cell.rows.min(cell.cols);
    let jit = jitter_budget(min_cell);
    let r_max = min_cell as f64 / 2.0 - 1.0 - jit as f64;
    if r_max < 1.0 {
        return Err(Error::Config(format!(
            "slot '{slot}': cell {}x{} too small for any part (usable radius {r_max:.2} < 1)",
            cell.rows, cell.cols
        )));
    }
    let radius = (size_frac * r_max).max(1.0);
    let h = seeds::mix(seeds::derive(scene_seed, "jitter", attempt), seeds::label_key(slot));
    let span = (2 * jit + 1) as u64;
    let dr = (h % span) as i64 - jit;
    let dc = ((h >> 32) % span) as i64 - jit;
    Ok(Placement {
        center_r: cell.row0 as f64 + cell.rows as f64 / 2.0 + dr as f64,
        center_c: cell.col0 as f64 + cell.cols as f64 / 2.0 + dc as f64,
        radius,
    })
}

/// Whether pixel (r, c) is inside the shape at the given placement.
fn shape_contains(shape: Shape, p: &Placement, r: usize, c: usize) -> bool {
    let dr = r as f64 + 0.5 - p.center_r;
    let dc = c as f64 + 0.5 - p.center_c;
    match shape {
        Shape::Disc => dr * dr + dc * dc <= p.radius * p.radius,
        Shape::Square => {
            let half = p.radius * 0.9;
            dr.abs() <= half && dc.abs() <= half
        }
        Shape::Triangle => {
            // apex up, base down
            dr.abs() <= p.radius && dc.abs() <= (dr + p.radius) * 0.5
        }
    }
}

/// Rasterize one part into the image, returning its mask.
pub fn draw_part(
    img: &mut ImageBuffer,
    shape: Shape,
    color: [f32; 3],
    placement: &Placement,
) -> Mask {
    let mut mask = Mask::empty(img.rows, img.cols);
    let r_lo = (placement.center_r - placement.radius - 1.0).floor().max(0.0) as usize;
    let r_hi = ((placement.center_r + placement.radius + 1.0).ceil() as usize).min(img.rows);
    let c_lo = (placement.center_c - placement.radius - 1.0).floor().max(0.0) as usize;
    let c_hi = ((placement.center_c + placement.radius + 1.0).ceil() as usize).min(img.cols);
    for r in r_lo..r_hi {
        for c in c_lo..c_hi {
            if shape_contains(shape, placement, r, c) {
                img.set(r, c, color);
                mask.set(r, c, true);
            }
        }
    }
    mask
}

const MAX_PLACEMENT_ATTEMPTS: u64 = 8;

/// Render a scene from a class spec.
pub fn render_scene(
    class_spec: &ClassSpec,
    vocabulary: &PartVocabulary,
    dims: (usize, usize),
    scene_seed: u64,
    background_seed: u64,
    background: &BackgroundSpec,
) -> Result<Scene> {
    let (rows, cols) = dims;
    let anchors = anchor_layout(rows, cols, vocabulary.part_slots.len())?;

    'attempts: for attempt in 0..MAX_PLACEMENT_ATTEMPTS {
        let mut img = paint_background(background, background_seed, rows, cols);
        let mut occupancy = Mask::empty(rows, cols);
        let mut part_masks = std::collections::BTreeMap::new();

        for (slot_idx, slot) in vocabulary.part_slots.iter().enumerate() {
            let variant_idx = match class_spec.assignment.get(slot) {
                Some(PartAssignment::Variant(v)) => *v,
                Some(PartAssignment::Absent) | None => continue,
            };
            let descriptor = vocabulary.descriptor(slot, variant_idx)?;
            let placement = place_part(
                &anchors[slot_idx],
                slot,
                descriptor.size_frac,
                scene_seed,
                attempt,
            )?;
            let mask = draw_part(&mut img, descriptor.shape, descriptor.color, &placement);
            if mask.area() == 0 {
                return Err(Error::Render(format!(
                    "slot '{slot}' variant {variant_idx} rendered an empty mask"
                )));
            }
            for i in 0..mask.bits.len() {
                if mask.bits[i] != 0 {
                    if occupancy.bits[i] != 0 {
                        continue 'attempts; // collision: re-jitter everything
                    }
                    occupancy.bits[i] = 1;
                }
            }
            part_masks.insert(slot.clone(), mask);
        }

        return Ok(Scene {
            id: format!("scene_{scene_seed:016x}"),
            image: img,
            part_masks,
            class_id: class_spec.class_id,
            scene_seed,
            background_seed,
            background: background.clone(),
            provenance: class_spec.assignment.clone(),
            placement_attempt: attempt,
        });
    }

    Err(Error::Render(format!(
        "part placement collision persisted after {MAX_PLACEMENT_ATTEMPTS} attempts \
         for class {}",
        class_spec.class_id
    )))
}
