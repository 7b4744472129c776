//! Prototype-based classifier over patch features.
//!
//! Each class owns a set of prototype vectors living in patch feature
//! space. An image is scored by computing, for every prototype, a
//! similarity map over the patch grid, max-pooling it to one activation,
//! and combining activations through a sign-structured linear layer:
//! weights from a prototype to its own class are non-negative, to other
//! classes non-positive.

mod features;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ImageBuffer;

pub use features::{extract_features, patch_feature, FeatureGrid, FEATURE_DIM};
pub use train::{project_prototypes, train};

/// Where a prototype's vector came from in the training set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchRef {
    pub scene_id: String,
    pub grid_row: usize,
    pub grid_col: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prototype {
    pub class_id: usize,
    pub vector: Vec<f64>,
    /// Set once the prototype has been projected onto a real patch.
    pub projection_source: Option<PatchRef>,
}

/// Training hyperparameters, kept with the model for provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub prototypes_per_class: usize,
    pub patch: usize,
    pub stride: usize,
    pub epsilon: f64,
    /// A patch becomes a prototype candidate when at least this fraction
    /// of its pixels lie inside some part mask.
    pub min_part_overlap: f64,
    pub medoid_iterations: usize,
    pub regression_epochs: usize,
    pub regression_rate: f64,
    pub regression_l2: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            prototypes_per_class: 10,
            patch: 4,
            stride: 4,
            epsilon: 1e-4,
            min_part_overlap: 0.125,
            medoid_iterations: 20,
            regression_epochs: 600,
            regression_rate: 0.05,
            regression_l2: 1e-3,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub config: TrainConfig,
    pub n_classes: usize,
    pub prototypes: Vec<Prototype>,
    /// `weights[class][prototype]`, sign-structured by ownership.
    pub weights: Vec<Vec<f64>>,
}

impl Model {
    pub fn validate(&self) -> Result<()> {
        if self.weights.len() != self.n_classes {
            return Err(Error::Data(format!(
                "weight matrix has {} rows for {} classes",
                self.weights.len(),
                self.n_classes
            )));
        }
        for (class_id, row) in self.weights.iter().enumerate() {
            if row.len() != self.prototypes.len() {
                return Err(Error::Data(format!(
                    "weight row {class_id} has {} entries for {} prototypes",
                    row.len(),
                    self.prototypes.len()
                )));
            }
            for (j, (w, proto)) in row.iter().zip(&self.prototypes).enumerate() {
                if proto.class_id == class_id && *w < 0.0 {
                    return Err(Error::Data(format!(
                        "own-class weight [{class_id}][{j}] is negative"
                    )));
                }
                if proto.class_id != class_id && *w > 0.0 {
                    return Err(Error::Data(format!(
                        "cross-class weight [{class_id}][{j}] is positive"
                    )));
                }
            }
        }
        for proto in &self.prototypes {
            if proto.vector.len() != FEATURE_DIM {
                return Err(Error::Data(format!(
                    "prototype vector has dim {}, expected {FEATURE_DIM}",
                    proto.vector.len()
                )));
            }
            if proto.class_id >= self.n_classes {
                return Err(Error::Data(format!(
                    "prototype class id {} out of range",
                    proto.class_id
                )));
            }
        }
        Ok(())
    }
}

/// One prototype's similarity over the patch grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMap {
    pub prototype_index: usize,
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub patch: usize,
    pub stride: usize,
    pub values: Vec<f64>,
}

impl SimilarityMap {
    pub fn value(&self, grid_row: usize, grid_col: usize) -> f64 {
        self.values[grid_row * self.grid_cols + grid_col]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Per-class scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Logits(pub Vec<f64>);

impl Logits {
    /// Index of the highest score; ties go to the lowest class id.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.0.iter().enumerate() {
            if v > self.0[best] {
                best = i;
            }
        }
        best
    }

    pub fn score(&self, class_id: usize) -> f64 {
        self.0[class_id]
    }
}

/// Full forward pass: logits plus every prototype's similarity map.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub logits: Logits,
    pub maps: Vec<SimilarityMap>,
    /// Max-pooled activation per prototype, in prototype order.
    pub activations: Vec<f64>,
}

/// Log-ratio similarity between the patch grid and one prototype.
///
/// At distance zero the value peaks at `ln(1/epsilon)`; it falls toward
/// zero as the squared distance grows.
pub fn similarity_map(
    grid: &FeatureGrid,
    prototype: &Prototype,
    prototype_index: usize,
    epsilon: f64,
) -> Result<SimilarityMap> {
    if prototype.vector.len() != FEATURE_DIM {
        return Err(Error::Dimension(format!(
            "prototype dim {} does not match feature dim {FEATURE_DIM}",
            prototype.vector.len()
        )));
    }
    if !(epsilon > 0.0) {
        return Err(Error::Config(format!("epsilon must be positive, got {epsilon}")));
    }
    let mut values = Vec::with_capacity(grid.n_patches());
    for gr in 0..grid.grid_rows {
        for gc in 0..grid.grid_cols {
            let z = grid.feature(gr, gc);
            let mut d2 = 0.0f64;
            for (a, b) in z.iter().zip(&prototype.vector) {
                let d = a - b;
                d2 += d * d;
            }
            values.push(((d2 + 1.0) / (d2 + epsilon)).ln());
        }
    }
    Ok(SimilarityMap {
        prototype_index,
        grid_rows: grid.grid_rows,
        grid_cols: grid.grid_cols,
        patch: grid.patch,
        stride: grid.stride,
        values,
    })
}

/// Score an already-featurized image.
pub fn forward_features(model: &Model, grid: &FeatureGrid) -> Result<ForwardPass> {
    let maps: Vec<SimilarityMap> = model
        .prototypes
        .iter()
        .enumerate()
        .map(|(j, p)| similarity_map(grid, p, j, model.config.epsilon))
        .collect::<Result<_>>()?;
    let activations: Vec<f64> = maps.iter().map(SimilarityMap::max).collect();
    let logits = (0..model.n_classes)
        .map(|c| {
            model.weights[c]
                .iter()
                .zip(&activations)
                .map(|(w, a)| w * a)
                .sum::<f64>()
        })
        .collect();
    Ok(ForwardPass { logits: Logits(logits), maps, activations })
}

/// Featurize and score an image.
pub fn forward(model: &Model, image: &ImageBuffer) -> Result<ForwardPass> {
    let grid = extract_features(image, model.config.patch, model.config.stride)?;
    forward_features(model, &grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn proto(class_id: usize, fill: f64) -> Prototype {
        Prototype { class_id, vector: vec![fill; FEATURE_DIM], projection_source: None }
    }

    fn toy_grid() -> FeatureGrid {
        let mut img = ImageBuffer::filled(16, 16, [0.5; 3]);
        for r in 4..9 {
            for c in 2..13 {
                img.set(r, c, [0.9, 0.2, 0.1]);
            }
        }
        extract_features(&img, 4, 4).unwrap()
    }

    #[test]
    fn similarity_peaks_at_matching_patch() {
        let grid = toy_grid();
        let vector = grid.feature(1, 1).to_vec();
        let p = Prototype { class_id: 0, vector, projection_source: None };
        let map = similarity_map(&grid, &p, 0, 1e-4).unwrap();
        let peak = (1.0f64 / 1e-4).ln();
        assert_eq!(map.value(1, 1), peak);
        assert_eq!(map.max(), peak);
        for gr in 0..map.grid_rows {
            for gc in 0..map.grid_cols {
                assert!(map.value(gr, gc) <= peak);
                assert!(map.value(gr, gc) > 0.0);
            }
        }
    }

    #[test]
    fn similarity_matches_naive_double_loop() {
        let grid = toy_grid();
        let p = proto(0, 0.3);
        let map = similarity_map(&grid, &p, 0, 1e-4).unwrap();
        for gr in 0..grid.grid_rows {
            for gc in 0..grid.grid_cols {
                let z = grid.feature(gr, gc);
                let d2: f64 = z.iter().zip(&p.vector).map(|(a, b)| (a - b) * (a - b)).sum();
                let expected = ((d2 + 1.0) / (d2 + 1e-4)).ln();
                assert_eq!(map.value(gr, gc), expected);
            }
        }
    }

    #[test]
    fn unit_distance_similarity_value() {
        let grid = {
            let img = ImageBuffer::filled(4, 4, [0.0; 3]);
            extract_features(&img, 4, 4).unwrap()
        };
        // distance 1 from the all-zeros feature in the first coordinate
        let mut vector = vec![0.0; FEATURE_DIM];
        vector[0] = 1.0;
        let p = Prototype { class_id: 0, vector, projection_source: None };
        let map = similarity_map(&grid, &p, 0, 1e-4).unwrap();
        let expected = (2.0f64 / 1.0001).ln();
        assert!((map.value(0, 0) - expected).abs() < 1e-15);
    }

    fn toy_model() -> Model {
        Model {
            config: TrainConfig { patch: 4, stride: 4, ..TrainConfig::default() },
            n_classes: 2,
            prototypes: vec![proto(0, 0.5), proto(0, 0.2), proto(1, 0.8)],
            weights: vec![vec![1.0, 0.5, -0.25], vec![-0.1, 0.0, 2.0]],
        }
    }

    #[test]
    fn forward_matches_slow_reference() {
        let model = toy_model();
        let mut img = ImageBuffer::filled(16, 16, [0.4; 3]);
        img.set(5, 5, [0.9, 0.9, 0.1]);
        let pass = forward(&model, &img).unwrap();

        let grid = extract_features(&img, 4, 4).unwrap();
        for c in 0..model.n_classes {
            let mut expected = 0.0f64;
            for (j, p) in model.prototypes.iter().enumerate() {
                let mut best = f64::NEG_INFINITY;
                for gr in 0..grid.grid_rows {
                    for gc in 0..grid.grid_cols {
                        let z = grid.feature(gr, gc);
                        let d2: f64 =
                            z.iter().zip(&p.vector).map(|(a, b)| (a - b) * (a - b)).sum();
                        best = best.max(((d2 + 1.0) / (d2 + model.config.epsilon)).ln());
                    }
                }
                expected += model.weights[c][j] * best;
            }
            assert!((pass.logits.score(c) - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(Logits(vec![1.0, 1.0, 0.5]).argmax(), 0);
        assert_eq!(Logits(vec![0.0, 2.0, 2.0]).argmax(), 1);
    }

    #[test]
    fn model_json_roundtrip_is_lossless() {
        let mut model = toy_model();
        model.prototypes[0].vector[3] = 0.1 + 0.2; // not exactly representable
        model.weights[0][1] = 1.0 / 3.0;
        model.prototypes[1].projection_source = Some(PatchRef {
            scene_id: "train_00001".into(),
            grid_row: 3,
            grid_col: 7,
        });
        let text = serde_json::to_string(&model).unwrap();
        let back: Model = serde_json::from_str(&text).unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn validate_rejects_sign_violations() {
        let mut model = toy_model();
        assert!(model.validate().is_ok());
        model.weights[0][2] = 0.5; // cross-class weight must stay <= 0
        assert!(model.validate().is_err());
        model.weights[0][2] = -0.5;
        model.weights[0][0] = -1.0; // own-class weight must stay >= 0
        assert!(model.validate().is_err());
    }

    #[test]
    fn zero_epsilon_is_rejected() {
        let grid = toy_grid();
        let p = proto(0, 0.0);
        assert!(similarity_map(&grid, &p, 0, 0.0).is_err());
    }
}
