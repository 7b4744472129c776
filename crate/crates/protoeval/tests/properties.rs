//! Generative property tests over the interface and attribution layers,
//! plus a guard that the committed micro fixture still matches what the
//! current generator and trainer produce.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use proptest::prelude::*;

use protoeval::attribution::{bb_attribution, ssm_attribution, upsample_map, AttributionGrid};
use protoeval::grid::Mask;
use protoeval::harness::{load_model, read_json, save_dataset, save_model};
use protoeval::interface::{important_parts_bb, important_parts_ssm, part_importance};
use protoeval::metrics::{spearman, RankableScores};
use protoeval::protonet::{train, SimilarityMap, TrainConfig};
use protoeval::scenegen::{generate_dataset, GenerationConfig};

fn grid_with_masks() -> impl Strategy<Value = (AttributionGrid, BTreeMap<String, Mask>)> {
    (2usize..=16, 2usize..=16, 1usize..=4)
        .prop_flat_map(|(rows, cols, n_slots)| {
            let values = proptest::collection::vec(-5.0f64..5.0, rows * cols);
            // per-pixel owner: n_slots means background
            let owners = proptest::collection::vec(0..=n_slots, rows * cols);
            (Just(rows), Just(cols), Just(n_slots), values, owners)
        })
        .prop_map(|(rows, cols, n_slots, values, owners)| {
            let att = AttributionGrid { rows, cols, values };
            let mut masks: BTreeMap<String, Mask> = (0..n_slots)
                .map(|i| (format!("part{i}"), Mask::empty(rows, cols)))
                .collect();
            for (idx, &owner) in owners.iter().enumerate() {
                if owner < n_slots {
                    masks.get_mut(&format!("part{owner}")).unwrap().bits[idx] = 1;
                }
            }
            (att, masks)
        })
}

fn similarity_maps() -> impl Strategy<Value = (Vec<SimilarityMap>, Vec<f64>, usize, usize)> {
    (1usize..=4, 1usize..=4, 1usize..=3, 1usize..=3, 1usize..=3)
        .prop_flat_map(|(gr, gc, patch, stride, n_maps)| {
            let values =
                proptest::collection::vec(proptest::collection::vec(0.0f64..9.5, gr * gc), n_maps);
            let weights = proptest::collection::vec(-2.0f64..2.0, n_maps);
            (Just((gr, gc, patch, stride)), values, weights)
        })
        .prop_map(|((gr, gc, patch, stride), values, weights)| {
            let maps: Vec<SimilarityMap> = values
                .into_iter()
                .enumerate()
                .map(|(i, vals)| SimilarityMap {
                    prototype_index: i,
                    grid_rows: gr,
                    grid_cols: gc,
                    patch,
                    stride,
                    values: vals,
                })
                .collect();
            let rows = (gr - 1) * stride + patch;
            let cols = (gc - 1) * stride + patch;
            (maps, weights, rows, cols)
        })
}

proptest! {
    /// Part scores plus the background residual reassemble the grid total.
    #[test]
    fn importance_conserves_mass((att, masks) in grid_with_masks()) {
        let pi = part_importance(&att, &masks).unwrap();
        let assembled: f64 = pi.scores.values().sum::<f64>() + pi.background_residual;
        let rel = (assembled - pi.total_mass).abs() / pi.total_mass.abs().max(1.0);
        prop_assert!(rel <= 1e-6, "relative error {rel}");
    }

    /// Raising the threshold never grows an important-part set.
    #[test]
    fn part_sets_shrink_monotonically(
        (att, masks) in grid_with_masks(),
        lo in 0.0f64..1.0,
        hi in 0.0f64..1.0,
    ) {
        let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
        for rule in [important_parts_bb, important_parts_ssm] {
            let wide = rule(&att, &masks, lo).unwrap();
            let narrow = rule(&att, &masks, hi).unwrap();
            prop_assert!(narrow.members.is_subset(&wide.members));
        }
    }

    /// Scaling every weight by a positive constant scales the summed
    /// attribution by the same constant.
    #[test]
    fn ssm_is_positively_homogeneous(
        (maps, weights, rows, cols) in similarity_maps(),
        lambda in prop::sample::select(vec![0.5f64, 2.0, 4.0, 32.0]),
    ) {
        let base = ssm_attribution(&maps, &weights, rows, cols).unwrap();
        let scaled_weights: Vec<f64> = weights.iter().map(|w| w * lambda).collect();
        let scaled = ssm_attribution(&maps, &scaled_weights, rows, cols).unwrap();
        for (a, b) in base.values.iter().zip(&scaled.values) {
            let want = lambda * a;
            prop_assert!(
                (want - b).abs() <= 1e-9 * want.abs().max(1.0),
                "want {want}, got {b}"
            );
        }
    }

    /// Both attribution styles emit non-negative grids regardless of
    /// weight signs.
    #[test]
    fn attribution_is_non_negative(
        (maps, weights, rows, cols) in similarity_maps(),
    ) {
        let bb = bb_attribution(&maps, &weights, rows, cols, 0.95).unwrap();
        let ssm = ssm_attribution(&maps, &weights, rows, cols).unwrap();
        prop_assert!(bb.values.iter().all(|&v| v >= 0.0));
        prop_assert!(ssm.values.iter().all(|&v| v >= 0.0));
    }

    /// Bilinear upsampling cannot overshoot the input's value range.
    #[test]
    fn upsampling_stays_within_input_range(
        (maps, _, rows, cols) in similarity_maps(),
    ) {
        let map = &maps[0];
        let lo = map.values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = map.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let up = upsample_map(map, rows, cols).unwrap();
        for &v in &up.values {
            prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
        }
    }

    /// Rank correlation ignores positive rescaling of either input.
    /// Integer bases and power-friendly scales keep the products exact,
    /// so ties survive the rescale and rho must not move at all.
    #[test]
    fn spearman_ignores_positive_scaling(
        base in proptest::collection::vec(-1000i32..1000, 2..8),
        scale in prop::sample::select(vec![0.5f64, 2.0, 4.0, 1024.0]),
    ) {
        let a: Vec<f64> = base.iter().map(|&v| v as f64).collect();
        let scaled: Vec<f64> = a.iter().map(|v| v * scale).collect();
        let other: Vec<f64> = a.iter().rev().cloned().collect();
        let plain = spearman(
            &RankableScores::new(a).unwrap(),
            &RankableScores::new(other.clone()).unwrap(),
        ).unwrap();
        let rescaled = spearman(
            &RankableScores::new(scaled).unwrap(),
            &RankableScores::new(other).unwrap(),
        ).unwrap();
        prop_assert_eq!(plain.rho, rescaled.rho);
        prop_assert_eq!(plain.constant_input, rescaled.constant_input);
    }
}

// ------------------------------------------------------------------
// Micro fixture drift guard.

fn micro_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/micro")
}

fn dir_file_bytes(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(
                    path.strip_prefix(dir).unwrap().to_path_buf(),
                    std::fs::read(&path).unwrap(),
                );
            }
        }
    }
    out
}

/// The committed micro dataset and model must stay reproducible from
/// their committed configs. A failure here means generator or trainer
/// behavior changed; regenerate the fixture and refresh its frozen
/// expectations together with that change.
#[test]
fn micro_fixture_reproduces_from_committed_configs() {
    let dir = micro_dir();
    let gen: GenerationConfig = read_json(&dir.join("generation.json")).unwrap();
    let bundle = generate_dataset(&gen).unwrap();

    let fresh = tempfile::tempdir().unwrap();
    save_dataset(&bundle, fresh.path()).unwrap();
    let regenerated = dir_file_bytes(fresh.path());
    let committed = dir_file_bytes(&dir.join("dataset"));
    assert_eq!(
        regenerated.keys().collect::<Vec<_>>(),
        committed.keys().collect::<Vec<_>>(),
        "dataset file listing drifted"
    );
    for (path, bytes) in &regenerated {
        assert_eq!(bytes, &committed[path], "dataset file {} drifted", path.display());
    }

    let train_config: TrainConfig = read_json(&dir.join("train.json")).unwrap();
    let model = train(&bundle, &train_config).unwrap();
    let model_path = fresh.path().join("model.json");
    save_model(&model, &model_path).unwrap();
    assert_eq!(
        std::fs::read(&model_path).unwrap(),
        std::fs::read(dir.join("model.json")).unwrap(),
        "trained model drifted from the committed fixture"
    );
    // loading back gives the same in-memory model
    let reloaded = load_model(&model_path).unwrap();
    assert_eq!(reloaded.weights, model.weights);
}
