//! Model fitting: medoid prototypes plus a sign-constrained linear head.
//!
//! Prototype candidates are patches that overlap a part mask. Each class
//! clusters its candidates with k-medoids, so prototype vectors are real
//! training patches from the start and projection is the identity. The
//! head is fit by projected gradient descent on one-vs-rest logistic
//! losses; after every step own-class weights are clamped non-negative
//! and cross-class weights non-positive. There is no intercept: every
//! score is a pure weighted sum of prototype activations.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::Mask;
use crate::scenegen::{DatasetBundle, Scene};
use crate::seeds;

use super::{
    extract_features, similarity_map, FeatureGrid, Model, PatchRef, Prototype, TrainConfig,
};

/// One candidate patch: its location and its feature vector.
struct Candidate {
    source: PatchRef,
    vector: Vec<f64>,
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Union of all part masks in a scene.
fn occupancy(scene: &Scene) -> Mask {
    let mut union = Mask::empty(scene.image.rows, scene.image.cols);
    for mask in scene.part_masks.values() {
        for i in 0..union.bits.len() {
            union.bits[i] |= mask.bits[i];
        }
    }
    union
}

/// Patches whose overlap with the part union meets the threshold.
fn qualifying_patches(
    scene: &Scene,
    grid: &FeatureGrid,
    min_overlap: f64,
) -> Vec<(usize, usize)> {
    let union = occupancy(scene);
    let needed = min_overlap * (grid.patch * grid.patch) as f64;
    let mut out = Vec::new();
    for gr in 0..grid.grid_rows {
        for gc in 0..grid.grid_cols {
            let (r0, c0, rows, cols) = grid.patch_rect(gr, gc);
            let mut inside = 0usize;
            for r in r0..r0 + rows {
                for c in c0..c0 + cols {
                    if union.get(r, c) {
                        inside += 1;
                    }
                }
            }
            if inside as f64 >= needed {
                out.push((gr, gc));
            }
        }
    }
    out
}

/// Plain k-medoids on a small point set. Ties always resolve to the
/// lowest index, so the outcome is a pure function of inputs.
fn k_medoids(points: &[Vec<f64>], k: usize, iterations: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = points.len();
    if n <= k {
        return (0..n).collect();
    }
    let mut dist = vec![0.0f64; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = squared_distance(&points[i], &points[j]);
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut medoids: Vec<usize> = order[..k].to_vec();
    medoids.sort_unstable();

    for _ in 0..iterations {
        // assignment: nearest medoid, ties to the lowest medoid slot
        let mut clusters: Vec<Vec<usize>> = vec![Vec::new(); k];
        for p in 0..n {
            let mut best_slot = 0usize;
            let mut best_d = f64::INFINITY;
            for (slot, &m) in medoids.iter().enumerate() {
                let d = dist[p * n + m];
                if d < best_d {
                    best_d = d;
                    best_slot = slot;
                }
            }
            clusters[best_slot].push(p);
        }
        // update: member minimizing total in-cluster distance
        let mut next = medoids.clone();
        for (slot, members) in clusters.iter().enumerate() {
            if members.is_empty() {
                continue;
            }
            let mut best = members[0];
            let mut best_cost = f64::INFINITY;
            for &candidate in members {
                let cost: f64 = members.iter().map(|&m| dist[candidate * n + m]).sum();
                if cost < best_cost {
                    best_cost = cost;
                    best = candidate;
                }
            }
            next[slot] = best;
        }
        next.sort_unstable();
        next.dedup();
        if next == medoids {
            break;
        }
        // dedup can shrink the set when two clusters collapse; refill
        // deterministically with the points farthest from any medoid
        while next.len() < k {
            let far = (0..n)
                .filter(|p| !next.contains(p))
                .max_by(|&a, &b| {
                    let da = next.iter().map(|&m| dist[a * n + m]).fold(f64::INFINITY, f64::min);
                    let db = next.iter().map(|&m| dist[b * n + m]).fold(f64::INFINITY, f64::min);
                    da.partial_cmp(&db).unwrap().then(b.cmp(&a))
                })
                .expect("n > k so a non-medoid point exists");
            next.push(far);
            next.sort_unstable();
        }
        medoids = next;
    }
    medoids
}

/// Replace each prototype vector with its nearest patch from the pools.
/// `pools[c]` holds every candidate patch of class `c`. Ties resolve to
/// the earliest candidate in scan order.
fn project_onto_pools(prototypes: &mut [Prototype], pools: &[Vec<Candidate>]) -> Result<()> {
    for proto in prototypes.iter_mut() {
        let pool = pools.get(proto.class_id).ok_or_else(|| {
            Error::Train(format!("no candidate pool for class {}", proto.class_id))
        })?;
        if pool.is_empty() {
            return Err(Error::Train(format!(
                "class {} has no prototype candidates",
                proto.class_id
            )));
        }
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (i, cand) in pool.iter().enumerate() {
            let d = squared_distance(&proto.vector, &cand.vector);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        proto.vector = pool[best].vector.clone();
        proto.projection_source = Some(pool[best].source.clone());
    }
    Ok(())
}

/// Snap every prototype to the nearest part-overlapping patch of its own
/// class in the training set. Training already leaves prototypes on real
/// patches, so a second projection changes nothing.
pub fn project_prototypes(model: &mut Model, bundle: &DatasetBundle) -> Result<()> {
    let grids = featurize(bundle, &model.config)?;
    let pools = candidate_pools(bundle, &grids, &model.config, model.n_classes)?;
    project_onto_pools(&mut model.prototypes, &pools)
}

fn featurize(bundle: &DatasetBundle, config: &TrainConfig) -> Result<Vec<FeatureGrid>> {
    bundle
        .train
        .par_iter()
        .map(|scene| extract_features(&scene.image, config.patch, config.stride))
        .collect()
}

fn candidate_pools(
    bundle: &DatasetBundle,
    grids: &[FeatureGrid],
    config: &TrainConfig,
    n_classes: usize,
) -> Result<Vec<Vec<Candidate>>> {
    let mut pools: Vec<Vec<Candidate>> = (0..n_classes).map(|_| Vec::new()).collect();
    for (scene, grid) in bundle.train.iter().zip(grids) {
        if scene.class_id >= n_classes {
            return Err(Error::Train(format!(
                "scene {} has class id {} outside 0..{n_classes}",
                scene.id, scene.class_id
            )));
        }
        for (gr, gc) in qualifying_patches(scene, grid, config.min_part_overlap) {
            pools[scene.class_id].push(Candidate {
                source: PatchRef { scene_id: scene.id.clone(), grid_row: gr, grid_col: gc },
                vector: grid.feature(gr, gc).to_vec(),
            });
        }
    }
    Ok(pools)
}

/// Max-pooled activation of every prototype on every training scene.
fn activation_matrix(prototypes: &[Prototype], grids: &[FeatureGrid], epsilon: f64) -> Result<Vec<Vec<f64>>> {
    grids
        .par_iter()
        .map(|grid| {
            prototypes
                .iter()
                .enumerate()
                .map(|(j, p)| Ok(similarity_map(grid, p, j, epsilon)?.max()))
                .collect::<Result<Vec<f64>>>()
        })
        .collect()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Projected gradient descent on the one-vs-rest logistic loss for one
/// class row. `own[j]` says whether prototype j belongs to this class.
fn fit_class_row(
    activations: &[Vec<f64>],
    labels: &[bool],
    own: &[bool],
    config: &TrainConfig,
) -> Vec<f64> {
    let n = activations.len();
    let p = own.len();
    let mut w = vec![0.0f64; p];
    let mut grad = vec![0.0f64; p];
    for _ in 0..config.regression_epochs {
        grad.iter_mut().for_each(|g| *g = 0.0);
        for (g_i, &y) in activations.iter().zip(labels) {
            let score: f64 = w.iter().zip(g_i).map(|(wj, gj)| wj * gj).sum();
            let err = sigmoid(score) - if y { 1.0 } else { 0.0 };
            for j in 0..p {
                grad[j] += err * g_i[j];
            }
        }
        for j in 0..p {
            let step = grad[j] / n as f64 + config.regression_l2 * w[j];
            w[j] -= config.regression_rate * step;
            if own[j] {
                w[j] = w[j].max(0.0);
            } else {
                w[j] = w[j].min(0.0);
            }
        }
    }
    w
}

/// Fit a model on the bundle's training partition.
pub fn train(bundle: &DatasetBundle, config: &TrainConfig) -> Result<Model> {
    if config.prototypes_per_class == 0 {
        return Err(Error::Config("prototypes_per_class must be at least 1".into()));
    }
    if bundle.train.is_empty() {
        return Err(Error::Train("training partition is empty".into()));
    }
    let n_classes = bundle.classes.len();
    let grids = featurize(bundle, config)?;
    let pools = candidate_pools(bundle, &grids, config, n_classes)?;

    let mut prototypes = Vec::new();
    for (class_id, pool) in pools.iter().enumerate() {
        if pool.is_empty() {
            return Err(Error::Train(format!(
                "class {class_id} has no patches overlapping part masks; \
                 cannot place prototypes"
            )));
        }
        let points: Vec<Vec<f64>> = pool.iter().map(|c| c.vector.clone()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(
            config.seed,
            "medoid-init",
            class_id as u64,
        ));
        let medoids = k_medoids(
            &points,
            config.prototypes_per_class,
            config.medoid_iterations,
            &mut rng,
        );
        for m in medoids {
            prototypes.push(Prototype {
                class_id,
                vector: pool[m].vector.clone(),
                projection_source: Some(pool[m].source.clone()),
            });
        }
    }
    // medoids are already pool members; this pins the invariant anyway
    project_onto_pools(&mut prototypes, &pools)?;

    let activations = activation_matrix(&prototypes, &grids, config.epsilon)?;
    let weights: Vec<Vec<f64>> = (0..n_classes)
        .into_par_iter()
        .map(|class_id| {
            let labels: Vec<bool> =
                bundle.train.iter().map(|s| s.class_id == class_id).collect();
            let own: Vec<bool> = prototypes.iter().map(|p| p.class_id == class_id).collect();
            fit_class_row(&activations, &labels, &own, config)
        })
        .collect();

    let model = Model { config: config.clone(), n_classes, prototypes, weights };
    model.validate()?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protonet::forward;
    use crate::scenegen::{generate_dataset, GenerationConfig};

    fn tiny_bundle() -> DatasetBundle {
        let config = GenerationConfig {
            n_classes: 2,
            part_slots: ["beak", "eyes"].map(String::from).to_vec(),
            n_variants: 2,
            discriminative_slots: 1,
            image_rows: 32,
            image_cols: 32,
            n_train: 16,
            n_test: 8,
            augmented_fraction: 0.25,
            seed: 11,
            ..GenerationConfig::default()
        };
        generate_dataset(&config).unwrap()
    }

    fn tiny_train_config() -> TrainConfig {
        TrainConfig {
            prototypes_per_class: 3,
            regression_epochs: 300,
            seed: 5,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn training_is_deterministic() {
        let bundle = tiny_bundle();
        let config = tiny_train_config();
        let a = train(&bundle, &config).unwrap();
        let b = train(&bundle, &config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn two_class_model_separates_train_and_test() {
        let bundle = tiny_bundle();
        let model = train(&bundle, &tiny_train_config()).unwrap();
        for scene in bundle.train.iter().chain(&bundle.test) {
            let pass = forward(&model, &scene.image).unwrap();
            assert_eq!(
                pass.logits.argmax(),
                scene.class_id,
                "scene {} misclassified",
                scene.id
            );
        }
    }

    #[test]
    fn prototypes_are_real_patches_of_their_class() {
        let bundle = tiny_bundle();
        let config = tiny_train_config();
        let model = train(&bundle, &config).unwrap();
        for proto in &model.prototypes {
            let source = proto.projection_source.as_ref().expect("projected prototype");
            let scene = bundle
                .train
                .iter()
                .find(|s| s.id == source.scene_id)
                .expect("source scene exists");
            assert_eq!(scene.class_id, proto.class_id);
            let grid = extract_features(&scene.image, config.patch, config.stride).unwrap();
            assert_eq!(
                proto.vector.as_slice(),
                grid.feature(source.grid_row, source.grid_col)
            );
        }
    }

    #[test]
    fn projection_is_idempotent() {
        let bundle = tiny_bundle();
        let mut model = train(&bundle, &tiny_train_config()).unwrap();
        let before = model.clone();
        project_prototypes(&mut model, &bundle).unwrap();
        assert_eq!(model, before);
    }

    #[test]
    fn projection_snaps_perturbed_prototypes_back() {
        let bundle = tiny_bundle();
        let mut model = train(&bundle, &tiny_train_config()).unwrap();
        let original = model.clone();
        for proto in &mut model.prototypes {
            for v in &mut proto.vector {
                *v += 1e-6;
            }
        }
        project_prototypes(&mut model, &bundle).unwrap();
        for (after, before) in model.prototypes.iter().zip(&original.prototypes) {
            assert_eq!(after.vector, before.vector);
        }
    }

    #[test]
    fn k_medoids_finds_obvious_clusters() {
        // two tight groups far apart; medoids must land one per group
        let mut points = Vec::new();
        for i in 0..4 {
            points.push(vec![0.0 + i as f64 * 0.01, 0.0]);
        }
        for i in 0..4 {
            points.push(vec![10.0 + i as f64 * 0.01, 10.0]);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let medoids = k_medoids(&points, 2, 20, &mut rng);
        assert_eq!(medoids.len(), 2);
        let sides: Vec<bool> = medoids.iter().map(|&m| points[m][0] > 5.0).collect();
        assert_ne!(sides[0], sides[1]);
    }

    #[test]
    fn k_medoids_small_pool_returns_everything() {
        let points = vec![vec![0.0], vec![1.0], vec![2.0]];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(k_medoids(&points, 5, 10, &mut rng), vec![0, 1, 2]);
    }

    #[test]
    fn qualifying_patches_respect_overlap_threshold() {
        let bundle = tiny_bundle();
        let scene = &bundle.train[0];
        let config = tiny_train_config();
        let grid = extract_features(&scene.image, config.patch, config.stride).unwrap();
        let union = occupancy(scene);
        for (gr, gc) in qualifying_patches(scene, &grid, config.min_part_overlap) {
            let (r0, c0, rows, cols) = grid.patch_rect(gr, gc);
            let mut inside = 0usize;
            for r in r0..r0 + rows {
                for c in c0..c0 + cols {
                    if union.get(r, c) {
                        inside += 1;
                    }
                }
            }
            assert!(inside as f64 >= config.min_part_overlap * (rows * cols) as f64);
        }
    }
}
