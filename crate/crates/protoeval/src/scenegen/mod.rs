//! Synthetic part-annotated scene generation.
//!
//! A dataset is defined by a part vocabulary (named slots, each with a
//! small set of visual variants) and a list of class signatures that
//! assign one variant per slot. Scenes render each assigned part into
//! its own anchor cell over a textured background, so part masks are
//! disjoint by construction and any part can be deleted, swapped, or
//! left alone without disturbing the rest of the image.

mod render;

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ImageBuffer, Mask};
use crate::seeds;

pub use render::{anchor_layout, background_pixel, paint_background, render_scene};

/// Geometric primitive used to rasterize a part variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Disc,
    Square,
    Triangle,
}

/// Appearance of one variant of one part slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantDescriptor {
    pub shape: Shape,
    pub color: [f32; 3],
    /// Fraction of the slot's maximum usable radius, in (0, 1].
    pub size_frac: f64,
}

/// Named part slots and their variant tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartVocabulary {
    /// Slot names in canonical order. All per-slot data is keyed on these.
    pub part_slots: Vec<String>,
    pub variants: BTreeMap<String, Vec<VariantDescriptor>>,
}

impl PartVocabulary {
    /// Build a vocabulary with `n_variants` procedurally colored variants
    /// per slot. Hues follow a golden-angle walk so any two variants are
    /// far apart in color space; shapes and sizes cycle out of phase.
    pub fn standard(part_slots: &[String], n_variants: usize) -> Result<Self> {
        if part_slots.is_empty() {
            return Err(Error::Config("part vocabulary needs at least one slot".into()));
        }
        if n_variants == 0 {
            return Err(Error::Config("each slot needs at least one variant".into()));
        }
        let mut seen = BTreeSet::new();
        for slot in part_slots {
            if !seen.insert(slot.as_str()) {
                return Err(Error::Config(format!("duplicate part slot '{slot}'")));
            }
        }
        const SHAPES: [Shape; 3] = [Shape::Disc, Shape::Square, Shape::Triangle];
        // Variant 0 is the smallest: slots pinned to variant 0 everywhere
        // (eyes, tail by default) stay small accents, like real birds.
        const SIZES: [f64; 3] = [0.55, 0.7, 0.85];
        let mut variants = BTreeMap::new();
        for (slot_idx, slot) in part_slots.iter().enumerate() {
            let table: Vec<VariantDescriptor> = (0..n_variants)
                .map(|v| {
                    let k = slot_idx * n_variants + v;
                    let hue = (k as f64 * 0.618_033_988_749_895).fract();
                    VariantDescriptor {
                        shape: SHAPES[(slot_idx + v) % SHAPES.len()],
                        color: hsv_to_rgb(hue, 0.8, 0.95),
                        size_frac: SIZES[v % SIZES.len()],
                    }
                })
                .collect();
            variants.insert(slot.clone(), table);
        }
        Ok(Self { part_slots: part_slots.to_vec(), variants })
    }

    pub fn descriptor(&self, slot: &str, variant: usize) -> Result<&VariantDescriptor> {
        let table = self
            .variants
            .get(slot)
            .ok_or_else(|| Error::Config(format!("unknown part slot '{slot}'")))?;
        table.get(variant).ok_or_else(|| {
            Error::Config(format!(
                "slot '{slot}' has {} variants, index {variant} out of range",
                table.len()
            ))
        })
    }

    pub fn n_variants(&self, slot: &str) -> usize {
        self.variants.get(slot).map_or(0, Vec::len)
    }

    pub fn slot_index(&self, slot: &str) -> Option<usize> {
        self.part_slots.iter().position(|s| s == slot)
    }
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f32; 3] {
    let h6 = (h.fract() + 1.0).fract() * 6.0;
    let i = h6.floor() as usize % 6;
    let f = h6 - h6.floor();
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    let (r, g, b) = match i {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    };
    [r as f32, g as f32, b as f32]
}

/// What a class puts in one slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartAssignment {
    Absent,
    Variant(usize),
}

/// A class signature: one assignment per vocabulary slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub class_id: usize,
    pub assignment: BTreeMap<String, PartAssignment>,
}

impl ClassSpec {
    pub fn assignment_for(&self, slot: &str) -> PartAssignment {
        self.assignment.get(slot).copied().unwrap_or(PartAssignment::Absent)
    }
}

/// Background texture: a flat base color plus seeded per-pixel noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackgroundSpec {
    pub base: [f32; 3],
    pub amplitude: f32,
}

impl Default for BackgroundSpec {
    fn default() -> Self {
        Self { base: [0.5, 0.5, 0.5], amplitude: 0.06 }
    }
}

/// A rendered scene with per-part pixel masks.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub id: String,
    pub image: ImageBuffer,
    /// Masks for the parts actually drawn; disjoint by construction.
    pub part_masks: BTreeMap<String, Mask>,
    pub class_id: usize,
    pub scene_seed: u64,
    pub background_seed: u64,
    pub background: BackgroundSpec,
    /// The assignment this scene was rendered from. Interventions keep
    /// it in sync with the pixels.
    pub provenance: BTreeMap<String, PartAssignment>,
    /// Jitter stream index used for placement; replayed on part swaps.
    pub placement_attempt: u64,
}

impl Scene {
    /// Slots with a drawn part, in vocabulary-independent sorted order.
    pub fn present_slots(&self) -> Vec<&str> {
        self.part_masks.keys().map(String::as_str).collect()
    }

    pub fn mask(&self, slot: &str) -> Option<&Mask> {
        self.part_masks.get(slot)
    }
}

/// Knobs for `generate_dataset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    pub n_classes: usize,
    pub part_slots: Vec<String>,
    pub n_variants: usize,
    /// Leading slots whose variants distinguish classes; the rest share
    /// variant 0 everywhere and carry no class signal.
    pub discriminative_slots: usize,
    pub image_rows: usize,
    pub image_cols: usize,
    pub n_train: usize,
    pub n_test: usize,
    /// Fraction of training scenes rendered with one part deleted.
    pub augmented_fraction: f64,
    pub background: BackgroundSpec,
    pub seed: u64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            n_classes: 10,
            part_slots: ["beak", "wings", "feet", "eyes", "tail"]
                .map(String::from)
                .to_vec(),
            n_variants: 3,
            discriminative_slots: 3,
            image_rows: 64,
            image_cols: 64,
            n_train: 200,
            n_test: 100,
            augmented_fraction: 0.25,
            background: BackgroundSpec::default(),
            seed: 7,
        }
    }
}

impl GenerationConfig {
    fn validate(&self) -> Result<()> {
        if self.n_classes == 0 {
            return Err(Error::Config("n_classes must be at least 1".into()));
        }
        if self.part_slots.is_empty() {
            return Err(Error::Config("part_slots must be non-empty".into()));
        }
        if self.part_slots.len() > 32 {
            return Err(Error::Config("at most 32 part slots are supported".into()));
        }
        if self.discriminative_slots == 0 || self.discriminative_slots > self.part_slots.len() {
            return Err(Error::Config(format!(
                "discriminative_slots must be in 1..={}, got {}",
                self.part_slots.len(),
                self.discriminative_slots
            )));
        }
        if !(0.0..=1.0).contains(&self.augmented_fraction) {
            return Err(Error::Config(format!(
                "augmented_fraction must be in [0, 1], got {}",
                self.augmented_fraction
            )));
        }
        let capacity = (self.n_variants as u128).pow(self.discriminative_slots as u32);
        if (self.n_classes as u128) > capacity {
            return Err(Error::Config(format!(
                "{} discriminative slots with {} variants admit only {} distinct \
                 class signatures, need {}",
                self.discriminative_slots, self.n_variants, capacity, self.n_classes
            )));
        }
        Ok(())
    }
}

/// Everything `generate_dataset` produces, in memory.
#[derive(Debug, Clone)]
pub struct DatasetBundle {
    pub train: Vec<Scene>,
    pub test: Vec<Scene>,
    pub vocabulary: PartVocabulary,
    pub classes: Vec<ClassSpec>,
    pub config: GenerationConfig,
}

impl DatasetBundle {
    pub fn class(&self, class_id: usize) -> Result<&ClassSpec> {
        self.classes
            .get(class_id)
            .ok_or_else(|| Error::Data(format!("class id {class_id} out of range")))
    }
}

/// Build the class signature table: all distinct variant combinations
/// over the discriminative slots, seeded-shuffled, first `n_classes`
/// taken. Non-discriminative slots share variant 0.
fn build_classes(config: &GenerationConfig) -> Vec<ClassSpec> {
    let disc = config.discriminative_slots;
    let n_combos = config.n_variants.pow(disc as u32);
    let mut combos: Vec<Vec<usize>> = (0..n_combos)
        .map(|mut k| {
            let mut combo = vec![0usize; disc];
            for v in combo.iter_mut() {
                *v = k % config.n_variants;
                k /= config.n_variants;
            }
            combo
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(config.seed, "class-table", 0));
    combos.shuffle(&mut rng);
    combos
        .into_iter()
        .take(config.n_classes)
        .enumerate()
        .map(|(class_id, combo)| {
            let mut assignment = BTreeMap::new();
            for (i, slot) in config.part_slots.iter().enumerate() {
                let variant = if i < disc { combo[i] } else { 0 };
                assignment.insert(slot.clone(), PartAssignment::Variant(variant));
            }
            ClassSpec { class_id, assignment }
        })
        .collect()
}

/// Generate the full train/test dataset described by `config`.
///
/// Scene seeds are derived from `(config.seed, partition, index)`, so
/// the two partitions draw from disjoint streams and regeneration is
/// bit-identical regardless of thread count.
pub fn generate_dataset(config: &GenerationConfig) -> Result<DatasetBundle> {
    config.validate()?;
    let vocabulary = PartVocabulary::standard(&config.part_slots, config.n_variants)?;
    let classes = build_classes(config);
    let dims = (config.image_rows, config.image_cols);

    let render_partition = |partition: &'static str, count: usize| -> Result<Vec<Scene>> {
        (0..count)
            .into_par_iter()
            .map(|i| {
                let class_spec = &classes[i % classes.len()];
                let scene_label = format!("{partition}-scene");
                let bg_label = format!("{partition}-background");
                let mut scene = render_scene(
                    class_spec,
                    &vocabulary,
                    dims,
                    seeds::derive(config.seed, &scene_label, i as u64),
                    seeds::derive(config.seed, &bg_label, i as u64),
                    &config.background,
                )?;
                scene.id = format!("{partition}_{i:05}");
                Ok(scene)
            })
            .collect()
    };

    let mut train = render_partition("train", config.n_train)?;
    let test = render_partition("test", config.n_test)?;

    let n_augmented = (config.augmented_fraction * config.n_train as f64).floor() as usize;
    let first_augmented = config.n_train - n_augmented;
    for i in first_augmented..config.n_train {
        let mut rng =
            ChaCha8Rng::seed_from_u64(seeds::derive(config.seed, "augment", i as u64));
        let present: Vec<String> =
            train[i].part_masks.keys().cloned().collect();
        if present.len() < 2 {
            continue; // keep at least one part on screen
        }
        let victim = &present[rng.random_range(0..present.len())];
        train[i] = remove_part(&train[i], victim)?;
    }

    Ok(DatasetBundle { train, test, vocabulary, classes, config: config.clone() })
}

/// Delete one part: its pixels revert to background, its mask is
/// dropped, the provenance slot flips to absent. No other pixel or
/// mask changes.
pub fn remove_part(scene: &Scene, slot: &str) -> Result<Scene> {
    let mask = scene
        .part_masks
        .get(slot)
        .ok_or_else(|| Error::Data(format!("scene {}: no part in slot '{slot}'", scene.id)))?;
    let mut out = scene.clone();
    for r in 0..mask.rows {
        for c in 0..mask.cols {
            if mask.get(r, c) {
                let px =
                    background_pixel(&scene.background, scene.background_seed, r, c);
                out.image.set(r, c, px);
            }
        }
    }
    out.part_masks.remove(slot);
    out.provenance.insert(slot.to_string(), PartAssignment::Absent);
    Ok(out)
}

/// Replace one part with another variant of the same slot, at the same
/// anchor placement. Returns the new scene and whether anything changed;
/// swapping a variant onto itself is a no-op.
pub fn swap_part(
    scene: &Scene,
    vocabulary: &PartVocabulary,
    slot: &str,
    new_variant: usize,
) -> Result<(Scene, bool)> {
    let current = scene.provenance.get(slot).copied().unwrap_or(PartAssignment::Absent);
    let current_variant = match current {
        PartAssignment::Variant(v) => v,
        PartAssignment::Absent => {
            return Err(Error::Data(format!(
                "scene {}: cannot swap absent slot '{slot}'",
                scene.id
            )))
        }
    };
    let descriptor = vocabulary.descriptor(slot, new_variant)?;
    if new_variant == current_variant {
        return Ok((scene.clone(), false));
    }
    let slot_idx = vocabulary
        .slot_index(slot)
        .ok_or_else(|| Error::Config(format!("unknown part slot '{slot}'")))?;

    let mut out = remove_part(scene, slot)?;
    let anchors = anchor_layout(
        scene.image.rows,
        scene.image.cols,
        vocabulary.part_slots.len(),
    )?;
    let placement = render::place_part(
        &anchors[slot_idx],
        slot,
        descriptor.size_frac,
        scene.scene_seed,
        scene.placement_attempt,
    )?;
    let mask = render::draw_part(&mut out.image, descriptor.shape, descriptor.color, &placement);
    if mask.area() == 0 {
        return Err(Error::Render(format!(
            "slot '{slot}' variant {new_variant} rendered an empty mask"
        )));
    }
    out.part_masks.insert(slot.to_string(), mask);
    out.provenance
        .insert(slot.to_string(), PartAssignment::Variant(new_variant));
    Ok((out, true))
}

/// Re-texture every background pixel from a new seed. Part pixels and
/// masks are untouched.
pub fn randomize_background(scene: &Scene, new_background_seed: u64) -> Scene {
    let mut out = scene.clone();
    let rows = scene.image.rows;
    let cols = scene.image.cols;
    let mut covered = Mask::empty(rows, cols);
    for mask in scene.part_masks.values() {
        for i in 0..covered.bits.len() {
            covered.bits[i] |= mask.bits[i];
        }
    }
    for r in 0..rows {
        for c in 0..cols {
            if !covered.get(r, c) {
                let px = background_pixel(&scene.background, new_background_seed, r, c);
                out.image.set(r, c, px);
            }
        }
    }
    out.background_seed = new_background_seed;
    out
}

/// All minimal identifying part sets for one class.
///
/// A slot set S identifies class t when, for every other class, the two
/// assignments differ on at least one slot in S. The result is the
/// antichain of minimal such sets, each in vocabulary slot order, sorted
/// by size then lexicographically. A lone class is identified by the
/// empty set.
pub fn gt_identifying_sets(
    classes: &[ClassSpec],
    vocabulary: &PartVocabulary,
    class_id: usize,
) -> Result<Vec<Vec<String>>> {
    let n_slots = vocabulary.part_slots.len();
    if n_slots > 32 {
        return Err(Error::Config("at most 32 part slots are supported".into()));
    }
    let target = classes
        .iter()
        .find(|c| c.class_id == class_id)
        .ok_or_else(|| Error::Data(format!("class id {class_id} not in class table")))?;

    // Per-rival bitmask of slots where the assignments differ.
    let mut diffs: Vec<u32> = Vec::new();
    for other in classes.iter().filter(|c| c.class_id != class_id) {
        let mut d = 0u32;
        for (i, slot) in vocabulary.part_slots.iter().enumerate() {
            if target.assignment_for(slot) != other.assignment_for(slot) {
                d |= 1 << i;
            }
        }
        if d == 0 {
            return Err(Error::Config(format!(
                "classes {} and {} have identical assignments",
                class_id, other.class_id
            )));
        }
        diffs.push(d);
    }
    if diffs.is_empty() {
        return Ok(vec![Vec::new()]);
    }

    let mut minimal: Vec<u32> = Vec::new();
    for size in 1..=n_slots as u32 {
        for subset in 0u32..(1 << n_slots) {
            if subset.count_ones() != size {
                continue;
            }
            if minimal.iter().any(|m| subset & m == *m) {
                continue; // superset of an accepted set
            }
            if diffs.iter().all(|d| subset & d != 0) {
                minimal.push(subset);
            }
        }
    }

    let mut named: Vec<Vec<String>> = minimal
        .into_iter()
        .map(|subset| {
            vocabulary
                .part_slots
                .iter()
                .enumerate()
                .filter(|(i, _)| subset & (1 << i) != 0)
                .map(|(_, s)| s.clone())
                .collect()
        })
        .collect();
    named.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    Ok(named)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> GenerationConfig {
        GenerationConfig {
            n_classes: 4,
            n_train: 12,
            n_test: 6,
            image_rows: 48,
            image_cols: 48,
            ..GenerationConfig::default()
        }
    }

    fn slots(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    fn spec_from(slot_variants: &[(&str, PartAssignment)], class_id: usize) -> ClassSpec {
        ClassSpec {
            class_id,
            assignment: slot_variants
                .iter()
                .map(|(s, a)| (s.to_string(), *a))
                .collect(),
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let config = tiny_config();
        let a = generate_dataset(&config).unwrap();
        let b = generate_dataset(&config).unwrap();
        assert_eq!(a.train.len(), b.train.len());
        for (x, y) in a.train.iter().zip(&b.train) {
            assert_eq!(x, y);
        }
        for (x, y) in a.test.iter().zip(&b.test) {
            assert_eq!(x, y);
        }
        assert_eq!(a.classes, b.classes);
    }

    #[test]
    fn masks_are_disjoint_and_match_non_background() {
        let bundle = generate_dataset(&tiny_config()).unwrap();
        for scene in bundle.train.iter().chain(&bundle.test) {
            let rows = scene.image.rows;
            let cols = scene.image.cols;
            for r in 0..rows {
                for c in 0..cols {
                    let covering: Vec<&str> = scene
                        .part_masks
                        .iter()
                        .filter(|(_, m)| m.get(r, c))
                        .map(|(s, _)| s.as_str())
                        .collect();
                    assert!(
                        covering.len() <= 1,
                        "pixel ({r},{c}) covered by {covering:?} in {}",
                        scene.id
                    );
                    let bg = background_pixel(
                        &scene.background,
                        scene.background_seed,
                        r,
                        c,
                    );
                    if covering.is_empty() {
                        assert_eq!(scene.image.get(r, c), bg);
                    }
                }
            }
        }
    }

    #[test]
    fn masks_are_nonempty_for_assigned_parts() {
        let bundle = generate_dataset(&tiny_config()).unwrap();
        for scene in bundle.train.iter().chain(&bundle.test) {
            for (slot, assignment) in &scene.provenance {
                match assignment {
                    PartAssignment::Variant(_) => {
                        let mask = scene.part_masks.get(slot).expect("mask for present part");
                        assert!(mask.area() > 0);
                    }
                    PartAssignment::Absent => {
                        assert!(!scene.part_masks.contains_key(slot));
                    }
                }
            }
        }
    }

    #[test]
    fn remove_part_touches_only_its_mask() {
        let bundle = generate_dataset(&tiny_config()).unwrap();
        let scene = &bundle.test[0];
        let slot = scene.part_masks.keys().next().unwrap().clone();
        let mask = scene.part_masks[&slot].clone();
        let removed = remove_part(scene, &slot).unwrap();

        assert!(!removed.part_masks.contains_key(&slot));
        assert_eq!(removed.provenance[&slot], PartAssignment::Absent);
        for r in 0..scene.image.rows {
            for c in 0..scene.image.cols {
                if mask.get(r, c) {
                    let bg =
                        background_pixel(&scene.background, scene.background_seed, r, c);
                    assert_eq!(removed.image.get(r, c), bg);
                } else {
                    assert_eq!(removed.image.get(r, c), scene.image.get(r, c));
                }
            }
        }
        for (other, m) in &scene.part_masks {
            if other != &slot {
                assert_eq!(&removed.part_masks[other], m);
            }
        }
    }

    #[test]
    fn remove_part_unknown_slot_is_an_error() {
        let bundle = generate_dataset(&tiny_config()).unwrap();
        assert!(remove_part(&bundle.test[0], "antenna").is_err());
    }

    #[test]
    fn swap_part_same_variant_is_a_noop() {
        let bundle = generate_dataset(&tiny_config()).unwrap();
        let scene = &bundle.test[0];
        let slot = "beak";
        let PartAssignment::Variant(v) = scene.provenance[slot] else {
            panic!("beak should be present");
        };
        let (swapped, changed) = swap_part(scene, &bundle.vocabulary, slot, v).unwrap();
        assert!(!changed);
        assert_eq!(&swapped, scene);
    }

    #[test]
    fn swap_part_changes_only_the_slot_region() {
        let bundle = generate_dataset(&tiny_config()).unwrap();
        let scene = &bundle.test[1];
        let slot = "wings";
        let PartAssignment::Variant(v) = scene.provenance[slot] else {
            panic!("wings should be present");
        };
        let new_variant = (v + 1) % bundle.vocabulary.n_variants(slot);
        let (swapped, changed) =
            swap_part(scene, &bundle.vocabulary, slot, new_variant).unwrap();
        assert!(changed);
        assert_eq!(swapped.provenance[slot], PartAssignment::Variant(new_variant));

        let old_mask = &scene.part_masks[slot];
        let new_mask = &swapped.part_masks[slot];
        assert!(new_mask.area() > 0);
        for r in 0..scene.image.rows {
            for c in 0..scene.image.cols {
                if !old_mask.get(r, c) && !new_mask.get(r, c) {
                    assert_eq!(swapped.image.get(r, c), scene.image.get(r, c));
                }
            }
        }
        for (other, m) in &scene.part_masks {
            if other != slot {
                assert_eq!(&swapped.part_masks[other], m);
            }
        }
    }

    #[test]
    fn swap_part_absent_slot_is_an_error() {
        let bundle = generate_dataset(&tiny_config()).unwrap();
        let scene = &bundle.test[0];
        let slot = scene.part_masks.keys().next().unwrap().clone();
        let removed = remove_part(scene, &slot).unwrap();
        assert!(swap_part(&removed, &bundle.vocabulary, &slot, 0).is_err());
    }

    #[test]
    fn randomize_background_preserves_parts() {
        let bundle = generate_dataset(&tiny_config()).unwrap();
        let scene = &bundle.test[2];
        let shuffled = randomize_background(scene, 0xBEEF);
        assert_eq!(shuffled.part_masks, scene.part_masks);
        let mut changed_background = 0usize;
        for r in 0..scene.image.rows {
            for c in 0..scene.image.cols {
                let in_part = scene.part_masks.values().any(|m| m.get(r, c));
                if in_part {
                    assert_eq!(shuffled.image.get(r, c), scene.image.get(r, c));
                } else if shuffled.image.get(r, c) != scene.image.get(r, c) {
                    changed_background += 1;
                }
            }
        }
        assert!(changed_background > 0, "new seed should move some background pixels");
    }

    #[test]
    fn class_signatures_are_distinct_and_share_tail_slots() {
        let config = GenerationConfig::default();
        let bundle = generate_dataset(&config).unwrap();
        assert_eq!(bundle.classes.len(), config.n_classes);
        for (i, a) in bundle.classes.iter().enumerate() {
            for b in &bundle.classes[i + 1..] {
                assert_ne!(a.assignment, b.assignment);
            }
        }
        for class in &bundle.classes {
            for slot in &config.part_slots[config.discriminative_slots..] {
                assert_eq!(class.assignment_for(slot), PartAssignment::Variant(0));
            }
        }
    }

    #[test]
    fn capacity_error_names_the_deficit() {
        let config = GenerationConfig {
            n_classes: 100,
            n_variants: 2,
            discriminative_slots: 2,
            ..GenerationConfig::default()
        };
        let err = generate_dataset(&config).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains('4') && msg.contains("100"), "got: {msg}");
    }

    // Brute-force oracle for identifying sets: enumerate every slot
    // subset, test the defining property directly on assignments, and
    // keep exactly the subsets none of whose proper subsets also pass.
    fn gt_oracle(
        classes: &[ClassSpec],
        vocabulary: &PartVocabulary,
        class_id: usize,
    ) -> Vec<Vec<String>> {
        let target = classes.iter().find(|c| c.class_id == class_id).unwrap();
        let slots = &vocabulary.part_slots;
        let n = slots.len();
        let identifies = |subset: usize| -> bool {
            classes.iter().filter(|c| c.class_id != class_id).all(|other| {
                (0..n).any(|i| {
                    subset & (1 << i) != 0
                        && target.assignment_for(&slots[i]) != other.assignment_for(&slots[i])
                })
            })
        };
        let mut result = Vec::new();
        for subset in 0..(1usize << n) {
            if !identifies(subset) {
                continue;
            }
            let strictly_smaller_passes = (0..(1usize << n)).any(|sub| {
                sub != subset && sub & subset == sub && identifies(sub)
            });
            if !strictly_smaller_passes {
                result.push(
                    (0..n)
                        .filter(|i| subset & (1 << i) != 0)
                        .map(|i| slots[i].clone())
                        .collect(),
                );
            }
        }
        result.sort_by(|a: &Vec<String>, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        result
    }

    #[test]
    fn identifying_sets_match_brute_force_oracle() {
        let vocab_slots = slots(&["beak", "wings", "feet", "eyes"]);
        let vocabulary = PartVocabulary::standard(&vocab_slots, 3).unwrap();
        use PartAssignment::{Absent, Variant};
        let classes = vec![
            spec_from(
                &[("beak", Variant(0)), ("wings", Variant(0)), ("feet", Variant(0)), ("eyes", Variant(0))],
                0,
            ),
            spec_from(
                &[("beak", Variant(1)), ("wings", Variant(0)), ("feet", Variant(1)), ("eyes", Variant(0))],
                1,
            ),
            spec_from(
                &[("beak", Variant(0)), ("wings", Variant(1)), ("feet", Variant(1)), ("eyes", Variant(0))],
                2,
            ),
            spec_from(
                &[("beak", Variant(2)), ("wings", Variant(2)), ("feet", Variant(0)), ("eyes", Absent)],
                3,
            ),
        ];
        for class_id in 0..classes.len() {
            let fast = gt_identifying_sets(&classes, &vocabulary, class_id).unwrap();
            let slow = gt_oracle(&classes, &vocabulary, class_id);
            assert_eq!(fast, slow, "class {class_id}");
        }
    }

    #[test]
    fn identifying_sets_on_generated_classes_match_oracle() {
        let bundle = generate_dataset(&GenerationConfig::default()).unwrap();
        for class_id in 0..bundle.classes.len() {
            let fast =
                gt_identifying_sets(&bundle.classes, &bundle.vocabulary, class_id).unwrap();
            let slow = gt_oracle(&bundle.classes, &bundle.vocabulary, class_id);
            assert_eq!(fast, slow, "class {class_id}");
            assert!(!fast.is_empty());
            // antichain: no set contains another
            for (i, a) in fast.iter().enumerate() {
                for (j, b) in fast.iter().enumerate() {
                    if i != j {
                        assert!(!a.iter().all(|s| b.contains(s)) || a.len() == b.len());
                    }
                }
            }
        }
    }

    #[test]
    fn lone_class_is_identified_by_the_empty_set() {
        let vocab_slots = slots(&["beak"]);
        let vocabulary = PartVocabulary::standard(&vocab_slots, 1).unwrap();
        let classes = vec![spec_from(&[("beak", PartAssignment::Variant(0))], 0)];
        let sets = gt_identifying_sets(&classes, &vocabulary, 0).unwrap();
        assert_eq!(sets, vec![Vec::<String>::new()]);
    }

    #[test]
    fn identical_classes_are_rejected() {
        let vocab_slots = slots(&["beak"]);
        let vocabulary = PartVocabulary::standard(&vocab_slots, 2).unwrap();
        let classes = vec![
            spec_from(&[("beak", PartAssignment::Variant(0))], 0),
            spec_from(&[("beak", PartAssignment::Variant(0))], 1),
        ];
        assert!(gt_identifying_sets(&classes, &vocabulary, 0).is_err());
    }

    #[test]
    fn augmented_scenes_have_a_missing_part() {
        let config = GenerationConfig {
            n_train: 40,
            augmented_fraction: 0.5,
            ..tiny_config()
        };
        let bundle = generate_dataset(&config).unwrap();
        let n_slots = config.part_slots.len();
        let n_augmented = bundle
            .train
            .iter()
            .filter(|s| s.part_masks.len() == n_slots - 1)
            .count();
        assert_eq!(n_augmented, 20);
        for scene in &bundle.train[..20] {
            assert_eq!(scene.part_masks.len(), n_slots);
        }
    }
}
