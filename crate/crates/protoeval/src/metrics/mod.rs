//! Explanation-quality metrics.
//!
//! Every driver walks the test scenes, applies controlled interventions
//! (part deletion, part swaps, background redraws), and scores how well
//! the explanation's part-level story matches what the model actually
//! does. Aggregates are plain means over the emitted diagnostics, so a
//! report can be audited without rerunning anything.
//!
//! The judgment calls that turn raw model outputs into scores live in
//! `MetricDefinitions`, one method per rule, so they can be read and
//! challenged in one place.

mod report;
mod spearman;

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attribution::{bb_attribution, ssm_attribution, AttributionGrid};
use crate::error::{Error, Result};
use crate::grid::Mask;
use crate::interface::{important_parts_bb, important_parts_ssm, part_importance, PartSet};
use crate::protonet::{forward, ForwardPass, Model};
use crate::scenegen::{
    gt_identifying_sets, remove_part, render_scene, randomize_background, ClassSpec,
    DatasetBundle, PartVocabulary, Scene,
};
use crate::seeds;

pub use report::{Diagnostic, MetricReport, MetricSummary, ThresholdMetrics};
pub use spearman::{spearman, RankableScores, SpearmanResult};

/// Which explanation strategy is being evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "bb")]
    BoundingBox,
    #[serde(rename = "ssm")]
    SummedMaps,
}

impl Method {
    pub fn tag(&self) -> &'static str {
        match self {
            Method::BoundingBox => "bb",
            Method::SummedMaps => "ssm",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bb" => Ok(Method::BoundingBox),
            "ssm" => Ok(Method::SummedMaps),
            other => Err(Error::Config(format!(
                "unknown method '{other}', expected 'bb' or 'ssm'"
            ))),
        }
    }
}

/// The reconstructed scoring rules, spelled out one per method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricDefinitions {
    /// Relative logit-change tolerance: deleting a part the explanation
    /// spared counts as harmless when the target logit moves by at most
    /// this fraction of its magnitude.
    pub deletion_tolerance: f64,
}

impl Default for MetricDefinitions {
    fn default() -> Self {
        Self { deletion_tolerance: 0.05 }
    }
}

impl MetricDefinitions {
    /// Map a rank correlation in [-1, 1] onto a score in [0, 1].
    pub fn sd_from_rho(&self, rho: f64) -> f64 {
        0.5 + 0.5 * rho
    }

    /// Best coverage of any minimal identifying set. An empty
    /// identifying set means the class needs no evidence, which any
    /// explanation satisfies.
    pub fn csdc_contribution(&self, members: &BTreeSet<String>, gt_sets: &[Vec<String>]) -> f64 {
        gt_sets
            .iter()
            .map(|g| {
                if g.is_empty() {
                    1.0
                } else {
                    let hit = g.iter().filter(|s| members.contains(*s)).count();
                    hit as f64 / g.len() as f64
                }
            })
            .fold(if gt_sets.is_empty() { 1.0 } else { 0.0 }, f64::max)
    }

    /// Whether deleting a spared part left the target logit essentially
    /// unchanged.
    pub fn deletion_is_ignorable(&self, before: f64, after: f64) -> bool {
        (after - before).abs() <= self.deletion_tolerance * before.abs()
    }

    /// A chimera passes when each class's explanation puts strictly more
    /// mass on that class's own parts than the rival explanation does.
    pub fn chimera_passes(
        &self,
        a_parts_share_for_a: f64,
        a_parts_share_for_b: f64,
        b_parts_share_for_a: f64,
        b_parts_share_for_b: f64,
    ) -> bool {
        a_parts_share_for_a > a_parts_share_for_b && b_parts_share_for_b > b_parts_share_for_a
    }
}

/// Evaluation knobs, stored verbatim in every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub thresholds: Vec<f64>,
    pub box_percentile: f64,
    pub background_draws: usize,
    pub chimera_pairs: usize,
    pub seed: u64,
    pub definitions: MetricDefinitions,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            thresholds: vec![0.01, 0.1, 0.25, 0.5],
            box_percentile: 0.95,
            background_draws: 10,
            chimera_pairs: 50,
            seed: 7,
            definitions: MetricDefinitions::default(),
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.thresholds.is_empty() {
            return Err(Error::Config("at least one threshold is required".into()));
        }
        for &t in &self.thresholds {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::Config(format!("threshold {t} outside [0, 1]")));
            }
        }
        if !(0.0..=1.0).contains(&self.box_percentile) {
            return Err(Error::Config(format!(
                "box percentile {} outside [0, 1]",
                self.box_percentile
            )));
        }
        if self.background_draws == 0 {
            return Err(Error::Config("background_draws must be at least 1".into()));
        }
        Ok(())
    }
}

/// One method bound to one model: computes attributions and part sets.
pub struct Explainer<'a> {
    pub model: &'a Model,
    pub method: Method,
    pub box_percentile: f64,
}

impl Explainer<'_> {
    /// Attribution for one class: built from that class's own
    /// prototypes only, each weighted by its non-negative own-class
    /// weight. Other classes' prototypes never contribute, so the
    /// clamp inside the builders is a safety net, not a filter.
    pub fn attribution(
        &self,
        pass: &ForwardPass,
        class_id: usize,
        rows: usize,
        cols: usize,
    ) -> Result<AttributionGrid> {
        let row = self
            .model
            .weights
            .get(class_id)
            .ok_or_else(|| Error::Data(format!("class id {class_id} out of range")))?;
        let mut maps = Vec::new();
        let mut weights = Vec::new();
        for (proto, map) in self.model.prototypes.iter().zip(&pass.maps) {
            if proto.class_id == class_id {
                maps.push(map.clone());
                weights.push(row[map.prototype_index]);
            }
        }
        match self.method {
            Method::BoundingBox => {
                bb_attribution(&maps, &weights, rows, cols, self.box_percentile)
            }
            Method::SummedMaps => ssm_attribution(&maps, &weights, rows, cols),
        }
    }

    pub fn important_parts(
        &self,
        att: &AttributionGrid,
        masks: &BTreeMap<String, Mask>,
        threshold: f64,
    ) -> Result<PartSet> {
        match self.method {
            Method::BoundingBox => important_parts_bb(att, masks, threshold),
            Method::SummedMaps => important_parts_ssm(att, masks, threshold),
        }
    }
}

/// Fraction of scenes whose predicted class matches the label.
pub fn accuracy(model: &Model, scenes: &[Scene]) -> Result<(f64, Vec<Diagnostic>)> {
    let diagnostics: Vec<Diagnostic> = scenes
        .par_iter()
        .map(|scene| {
            let pass = forward(model, &scene.image)?;
            Ok(Diagnostic::Prediction {
                scene_id: scene.id.clone(),
                true_class: scene.class_id,
                predicted_class: pass.logits.argmax(),
                true_class_logit: pass.logits.score(scene.class_id),
            })
        })
        .collect::<Result<_>>()?;
    let hits = diagnostics
        .iter()
        .filter(|d| matches!(d, Diagnostic::Prediction { true_class, predicted_class, .. } if true_class == predicted_class))
        .count();
    let value = if scenes.is_empty() { 0.0 } else { hits as f64 / scenes.len() as f64 };
    Ok((value, diagnostics))
}

/// Fraction of background redraws that leave the prediction unchanged.
pub fn background_independence(
    model: &Model,
    scenes: &[Scene],
    draws: usize,
    seed: u64,
) -> Result<(f64, Vec<Diagnostic>)> {
    let per_scene: Vec<Vec<Diagnostic>> = scenes
        .par_iter()
        .map(|scene| {
            let base = forward(model, &scene.image)?.logits.argmax();
            (0..draws)
                .map(|draw| {
                    let redrawn = randomize_background(
                        scene,
                        seeds::derive(seed, &scene.id, draw as u64),
                    );
                    let got = forward(model, &redrawn.image)?.logits.argmax();
                    Ok(Diagnostic::BackgroundDraw {
                        scene_id: scene.id.clone(),
                        draw,
                        stable: got == base,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let diagnostics: Vec<Diagnostic> = per_scene.into_iter().flatten().collect();
    let stable = diagnostics
        .iter()
        .filter(|d| matches!(d, Diagnostic::BackgroundDraw { stable: true, .. }))
        .count();
    let value = if diagnostics.is_empty() {
        0.0
    } else {
        stable as f64 / diagnostics.len() as f64
    };
    Ok((value, diagnostics))
}

/// Logit drop on the scene's class for deleting each present part.
fn deletion_drops(
    model: &Model,
    scene: &Scene,
    base: &ForwardPass,
) -> Result<BTreeMap<String, f64>> {
    let y = scene.class_id;
    let mut drops = BTreeMap::new();
    for slot in scene.part_masks.keys() {
        let ablated = remove_part(scene, slot)?;
        let after = forward(model, &ablated.image)?;
        drops.insert(slot.clone(), base.logits.score(y) - after.logits.score(y));
    }
    Ok(drops)
}

/// Does part importance rank parts the way single deletions do?
/// Scenes with fewer than two parts cannot be ranked and are skipped.
pub fn single_deletion(
    explainer: &Explainer<'_>,
    scenes: &[Scene],
    defs: &MetricDefinitions,
) -> Result<(f64, Vec<Diagnostic>)> {
    let diagnostics: Vec<Diagnostic> = scenes
        .par_iter()
        .map(|scene| {
            let n_parts = scene.part_masks.len();
            if n_parts < 2 {
                return Ok(Diagnostic::DeletionRanking {
                    scene_id: scene.id.clone(),
                    rho: 0.0,
                    constant_input: false,
                    n_parts,
                    included: false,
                });
            }
            let pass = forward(explainer.model, &scene.image)?;
            let att = explainer.attribution(
                &pass,
                scene.class_id,
                scene.image.rows,
                scene.image.cols,
            )?;
            let pi = part_importance(&att, &scene.part_masks)?;
            let drops = deletion_drops(explainer.model, scene, &pass)?;
            let slots: Vec<&String> = scene.part_masks.keys().collect();
            let pi_vec: Vec<f64> = slots
                .iter()
                .map(|s| pi.score(s).expect("present parts have scores"))
                .collect();
            let drop_vec: Vec<f64> = slots.iter().map(|s| drops[*s]).collect();
            let outcome = spearman(
                &RankableScores::new(pi_vec)?,
                &RankableScores::new(drop_vec)?,
            )?;
            Ok(Diagnostic::DeletionRanking {
                scene_id: scene.id.clone(),
                rho: outcome.rho,
                constant_input: outcome.constant_input,
                n_parts,
                included: true,
            })
        })
        .collect::<Result<_>>()?;
    let scores: Vec<f64> = diagnostics
        .iter()
        .filter_map(|d| match d {
            Diagnostic::DeletionRanking { rho, included: true, .. } => {
                Some(defs.sd_from_rho(*rho))
            }
            _ => None,
        })
        .collect();
    let value = if scores.is_empty() {
        0.0
    } else {
        scores.iter().sum::<f64>() / scores.len() as f64
    };
    Ok((value, diagnostics))
}

/// Threshold-dependent aggregates plus the best value over thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct CompletenessOutcome {
    pub per_threshold: Vec<(f64, f64, f64, f64)>,
    pub best_csdc: f64,
    pub best_pc: f64,
    pub best_dc: f64,
}

/// CSDC, PC, and DC at every threshold.
///
/// CSDC scores how much of some minimal identifying part set the
/// explanation recovered. PC deletes everything the explanation spared
/// and checks the prediction survives. DC deletes everything the
/// explanation kept and checks the prediction changes; an empty part
/// set deletes nothing and scores zero.
pub fn completeness_checks(
    explainer: &Explainer<'_>,
    scenes: &[Scene],
    classes: &[ClassSpec],
    vocabulary: &PartVocabulary,
    thresholds: &[f64],
    defs: &MetricDefinitions,
) -> Result<(CompletenessOutcome, Vec<Diagnostic>)> {
    let mut gt: BTreeMap<usize, Vec<Vec<String>>> = BTreeMap::new();
    for class in classes {
        gt.insert(
            class.class_id,
            gt_identifying_sets(classes, vocabulary, class.class_id)?,
        );
    }

    let per_scene: Vec<Vec<Diagnostic>> = scenes
        .par_iter()
        .map(|scene| {
            let pass = forward(explainer.model, &scene.image)?;
            let base_pred = pass.logits.argmax();
            let att = explainer.attribution(
                &pass,
                scene.class_id,
                scene.image.rows,
                scene.image.cols,
            )?;
            let gt_sets = gt
                .get(&scene.class_id)
                .ok_or_else(|| Error::Data(format!("no class spec for {}", scene.class_id)))?;
            thresholds
                .iter()
                .map(|&t| {
                    let set = explainer.important_parts(&att, &scene.part_masks, t)?;
                    let csdc = defs.csdc_contribution(&set.members, gt_sets);

                    let spared: Vec<&String> = scene
                        .part_masks
                        .keys()
                        .filter(|s| !set.members.contains(*s))
                        .collect();
                    let preserved = if spared.is_empty() {
                        true
                    } else {
                        let mut kept = scene.clone();
                        for slot in &spared {
                            kept = remove_part(&kept, slot)?;
                        }
                        forward(explainer.model, &kept.image)?.logits.argmax() == base_pred
                    };

                    let deletion_changed = if set.members.is_empty() {
                        false
                    } else {
                        let mut gutted = scene.clone();
                        for slot in &set.members {
                            gutted = remove_part(&gutted, slot)?;
                        }
                        forward(explainer.model, &gutted.image)?.logits.argmax() != base_pred
                    };

                    Ok(Diagnostic::Completeness {
                        scene_id: scene.id.clone(),
                        threshold: t,
                        csdc,
                        preserved,
                        deletion_changed,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let diagnostics: Vec<Diagnostic> = per_scene.into_iter().flatten().collect();

    let mut per_threshold = Vec::new();
    for &t in thresholds {
        let rows: Vec<(f64, bool, bool)> = diagnostics
            .iter()
            .filter_map(|d| match d {
                Diagnostic::Completeness { threshold, csdc, preserved, deletion_changed, .. }
                    if *threshold == t =>
                {
                    Some((*csdc, *preserved, *deletion_changed))
                }
                _ => None,
            })
            .collect();
        let n = rows.len() as f64;
        let csdc = rows.iter().map(|r| r.0).sum::<f64>() / n;
        let pc = rows.iter().filter(|r| r.1).count() as f64 / n;
        let dc = rows.iter().filter(|r| r.2).count() as f64 / n;
        per_threshold.push((t, csdc, pc, dc));
    }
    let best = |pick: fn(&(f64, f64, f64, f64)) -> f64| {
        per_threshold.iter().map(pick).fold(0.0f64, f64::max)
    };
    let outcome = CompletenessOutcome {
        best_csdc: best(|r| r.1),
        best_pc: best(|r| r.2),
        best_dc: best(|r| r.3),
        per_threshold,
    };
    Ok((outcome, diagnostics))
}

/// Distractibility at each threshold: of the present parts the
/// explanation left out, the fraction whose deletion the model shrugs
/// off. Pooled over scenes; a threshold where no part is ever spared
/// scores zero.
pub fn distractibility(
    explainer: &Explainer<'_>,
    scenes: &[Scene],
    thresholds: &[f64],
    defs: &MetricDefinitions,
) -> Result<(Vec<(f64, f64)>, f64, Vec<Diagnostic>)> {
    let per_scene: Vec<Vec<Diagnostic>> = scenes
        .par_iter()
        .map(|scene| {
            let pass = forward(explainer.model, &scene.image)?;
            let base = pass.logits.score(scene.class_id);
            let att = explainer.attribution(
                &pass,
                scene.class_id,
                scene.image.rows,
                scene.image.cols,
            )?;
            let after: BTreeMap<String, f64> = scene
                .part_masks
                .keys()
                .map(|slot| {
                    let ablated = remove_part(scene, slot)?;
                    let logit =
                        forward(explainer.model, &ablated.image)?.logits.score(scene.class_id);
                    Ok((slot.clone(), logit))
                })
                .collect::<Result<_>>()?;
            thresholds
                .iter()
                .map(|&t| {
                    let set = explainer.important_parts(&att, &scene.part_masks, t)?;
                    let spared: Vec<&String> = scene
                        .part_masks
                        .keys()
                        .filter(|s| !set.members.contains(*s))
                        .collect();
                    let stable = spared
                        .iter()
                        .filter(|s| defs.deletion_is_ignorable(base, after[**s]))
                        .count();
                    Ok(Diagnostic::Distraction {
                        scene_id: scene.id.clone(),
                        threshold: t,
                        spared_parts: spared.len(),
                        stable_parts: stable,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let diagnostics: Vec<Diagnostic> = per_scene.into_iter().flatten().collect();

    let mut per_threshold = Vec::new();
    for &t in thresholds {
        let (spared, stable) = diagnostics
            .iter()
            .filter_map(|d| match d {
                Diagnostic::Distraction { threshold, spared_parts, stable_parts, .. }
                    if *threshold == t =>
                {
                    Some((*spared_parts, *stable_parts))
                }
                _ => None,
            })
            .fold((0usize, 0usize), |acc, (sp, st)| (acc.0 + sp, acc.1 + st));
        let value = if spared == 0 { 0.0 } else { stable as f64 / spared as f64 };
        per_threshold.push((t, value));
    }
    let best = per_threshold.iter().map(|r| r.1).fold(0.0f64, f64::max);
    Ok((per_threshold, best, diagnostics))
}

/// Build the hybrid signature for a chimera of classes a and b: slots
/// where the classes disagree alternate between the two, starting with
/// b's variant. Returns the assignment and the disagreeing slots kept
/// from each side.
fn chimera_spec(
    a: &ClassSpec,
    b: &ClassSpec,
    vocabulary: &PartVocabulary,
) -> (ClassSpec, Vec<String>, Vec<String>) {
    let mut assignment = a.assignment.clone();
    let mut a_parts = Vec::new();
    let mut b_parts = Vec::new();
    let differing: Vec<&String> = vocabulary
        .part_slots
        .iter()
        .filter(|slot| a.assignment_for(slot) != b.assignment_for(slot))
        .collect();
    for (k, slot) in differing.iter().enumerate() {
        if k % 2 == 0 {
            assignment.insert((*slot).clone(), b.assignment_for(slot));
            b_parts.push((*slot).clone());
        } else {
            a_parts.push((*slot).clone());
        }
    }
    (ClassSpec { class_id: a.class_id, assignment }, a_parts, b_parts)
}

/// Share of an attribution's total mass that falls on the given parts.
fn mass_share(att: &AttributionGrid, scene: &Scene, parts: &[String]) -> Result<f64> {
    let pi = part_importance(att, &scene.part_masks)?;
    if pi.total_mass <= 0.0 {
        return Ok(0.0);
    }
    let on_parts: f64 = parts.iter().filter_map(|p| pi.score(p)).sum();
    Ok(on_parts / pi.total_mass)
}

/// Do explanations point at the right halves of class chimeras?
///
/// For sampled ordered class pairs (a, b), a scene mixing their parts is
/// rendered; the explanation for each class should put more mass on its
/// own parts than the other class's explanation does. Pairs whose
/// signatures differ in fewer than two slots cannot seat both sides and
/// are excluded.
pub fn target_sensitivity(
    explainer: &Explainer<'_>,
    bundle: &DatasetBundle,
    pair_budget: usize,
    seed: u64,
    defs: &MetricDefinitions,
) -> Result<(f64, Vec<Diagnostic>)> {
    let n = bundle.classes.len();
    let mut pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|a| (0..n).filter(move |&b| b != a).map(move |b| (a, b)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(seed, "chimera-order", 0));
    pairs.shuffle(&mut rng);
    pairs.truncate(pair_budget);

    let dims = (bundle.config.image_rows, bundle.config.image_cols);
    let diagnostics: Vec<Diagnostic> = pairs
        .par_iter()
        .enumerate()
        .map(|(index, &(a, b))| {
            let class_a = &bundle.classes[a];
            let class_b = &bundle.classes[b];
            let (spec, a_parts, b_parts) = chimera_spec(class_a, class_b, &bundle.vocabulary);
            let mut degenerate = a_parts.is_empty() || b_parts.is_empty();

            let mut shares = [0.0f64; 4];
            let mut passed = false;
            if !degenerate {
                let scene = render_scene(
                    &spec,
                    &bundle.vocabulary,
                    dims,
                    seeds::derive(seed, "chimera-scene", index as u64),
                    seeds::derive(seed, "chimera-background", index as u64),
                    &bundle.config.background,
                )?;
                // both sides must have actually rendered a mask
                if a_parts.iter().chain(&b_parts).any(|p| !scene.part_masks.contains_key(p)) {
                    degenerate = true;
                } else {
                    let pass = forward(explainer.model, &scene.image)?;
                    let att_a = explainer.attribution(&pass, a, dims.0, dims.1)?;
                    let att_b = explainer.attribution(&pass, b, dims.0, dims.1)?;
                    shares = [
                        mass_share(&att_a, &scene, &a_parts)?,
                        mass_share(&att_b, &scene, &a_parts)?,
                        mass_share(&att_a, &scene, &b_parts)?,
                        mass_share(&att_b, &scene, &b_parts)?,
                    ];
                    passed = defs.chimera_passes(shares[0], shares[1], shares[2], shares[3]);
                }
            }
            Ok(Diagnostic::Chimera {
                index,
                class_a: a,
                class_b: b,
                degenerate,
                passed,
                a_parts_share_for_a: shares[0],
                a_parts_share_for_b: shares[1],
                b_parts_share_for_a: shares[2],
                b_parts_share_for_b: shares[3],
            })
        })
        .collect::<Result<_>>()?;

    let (n_valid, n_passed) = diagnostics
        .iter()
        .filter_map(|d| match d {
            Diagnostic::Chimera { degenerate: false, passed, .. } => Some(*passed),
            _ => None,
        })
        .fold((0usize, 0usize), |acc, p| (acc.0 + 1, acc.1 + usize::from(p)));
    let value = if n_valid == 0 { 0.0 } else { n_passed as f64 / n_valid as f64 };
    Ok((value, diagnostics))
}
