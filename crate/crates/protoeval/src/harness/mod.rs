//! End-to-end runs: generate, train, evaluate, compare, render.
//!
//! `evaluate` is the single assembly point: it runs every metric driver
//! over the test partition and emits one report per method. Reports are
//! audited on the way out, so an aggregate that cannot be reproduced
//! from its own diagnostics never leaves this module.

mod compare;
mod io;
mod overlay;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{
    accuracy, background_independence, completeness_checks, distractibility, single_deletion,
    target_sensitivity, Diagnostic, EvalConfig, Explainer, Method, MetricReport, MetricSummary,
    ThresholdMetrics,
};
use crate::protonet::{Model, TrainConfig};
use crate::scenegen::{DatasetBundle, GenerationConfig, PartVocabulary};

pub use compare::{compare, ComparisonRow, ComparisonTable, Verdict};
pub use io::{
    load_dataset, load_model, load_report, read_json, save_dataset, save_model, save_report,
    write_json,
};
pub use overlay::{overlay_png_bytes, render_overlay, OverlayOptions};

/// The full recipe for one reproducible run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub generation: GenerationConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            generation: GenerationConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl RunConfig {
    /// Same recipe, different seed everywhere.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.generation.seed = seed;
        self.train.seed = seed;
        self.eval.seed = seed;
        self
    }
}

/// Run every metric for one method and assemble the report.
pub fn evaluate(
    bundle: &DatasetBundle,
    model: &Model,
    method: Method,
    eval: &EvalConfig,
) -> Result<MetricReport> {
    eval.validate()?;
    model.validate()?;
    if model.n_classes != bundle.classes.len() {
        return Err(Error::Data(format!(
            "model has {} classes but dataset has {}",
            model.n_classes,
            bundle.classes.len()
        )));
    }
    if bundle.test.is_empty() {
        return Err(Error::Data("no test scenes to evaluate".into()));
    }
    let explainer = Explainer { model, method, box_percentile: eval.box_percentile };

    let (acc, mut diagnostics) = accuracy(model, &bundle.test)?;
    let (bi, d_bi) =
        background_independence(model, &bundle.test, eval.background_draws, eval.seed)?;
    let (sd, d_sd) = single_deletion(&explainer, &bundle.test, &eval.definitions)?;
    let (completeness, d_comp) = completeness_checks(
        &explainer,
        &bundle.test,
        &bundle.classes,
        &bundle.vocabulary,
        &eval.thresholds,
        &eval.definitions,
    )?;
    let (d_per_t, d_best, d_dist) =
        distractibility(&explainer, &bundle.test, &eval.thresholds, &eval.definitions)?;
    let (ts, d_ts) =
        target_sensitivity(&explainer, bundle, eval.chimera_pairs, eval.seed, &eval.definitions)?;

    diagnostics.extend(d_bi);
    diagnostics.extend(d_sd);
    diagnostics.extend(d_comp);
    diagnostics.extend(d_dist);
    diagnostics.extend(d_ts);

    let per_threshold: Vec<ThresholdMetrics> = completeness
        .per_threshold
        .iter()
        .zip(&d_per_t)
        .map(|(&(t, csdc, pc, dc), &(_, d))| ThresholdMetrics { threshold: t, csdc, pc, dc, d })
        .collect();

    let report = MetricReport {
        method,
        config: eval.clone(),
        metrics: MetricSummary {
            accuracy: acc,
            bi,
            csdc: completeness.best_csdc,
            pc: completeness.best_pc,
            dc: completeness.best_dc,
            d: d_best,
            sd,
            ts,
        },
        per_threshold,
        diagnostics,
    };
    audit_report(&report)?;
    Ok(report)
}

const AUDIT_TOLERANCE: f64 = 1e-9;

fn audit_check(name: &str, stored: f64, recomputed: f64) -> Result<()> {
    if (stored - recomputed).abs() > AUDIT_TOLERANCE {
        return Err(Error::Data(format!(
            "report audit failed for {name}: stored {stored}, \
             recomputed {recomputed} from diagnostics"
        )));
    }
    Ok(())
}

/// Recompute every aggregate from the report's own diagnostics and
/// verify the stored numbers match.
pub fn audit_report(report: &MetricReport) -> Result<()> {
    let defs = &report.config.definitions;
    let diags = &report.diagnostics;

    let (hits, total) = diags
        .iter()
        .filter_map(|d| match d {
            Diagnostic::Prediction { true_class, predicted_class, .. } => {
                Some(true_class == predicted_class)
            }
            _ => None,
        })
        .fold((0usize, 0usize), |acc, hit| (acc.0 + usize::from(hit), acc.1 + 1));
    audit_check(
        "accuracy",
        report.metrics.accuracy,
        if total == 0 { 0.0 } else { hits as f64 / total as f64 },
    )?;

    let (stable, draws) = diags
        .iter()
        .filter_map(|d| match d {
            Diagnostic::BackgroundDraw { stable, .. } => Some(*stable),
            _ => None,
        })
        .fold((0usize, 0usize), |acc, s| (acc.0 + usize::from(s), acc.1 + 1));
    audit_check(
        "bi",
        report.metrics.bi,
        if draws == 0 { 0.0 } else { stable as f64 / draws as f64 },
    )?;

    let sd_scores: Vec<f64> = diags
        .iter()
        .filter_map(|d| match d {
            Diagnostic::DeletionRanking { rho, included: true, .. } => {
                Some(defs.sd_from_rho(*rho))
            }
            _ => None,
        })
        .collect();
    audit_check(
        "sd",
        report.metrics.sd,
        if sd_scores.is_empty() {
            0.0
        } else {
            sd_scores.iter().sum::<f64>() / sd_scores.len() as f64
        },
    )?;

    let (passed, valid) = diags
        .iter()
        .filter_map(|d| match d {
            Diagnostic::Chimera { degenerate: false, passed, .. } => Some(*passed),
            _ => None,
        })
        .fold((0usize, 0usize), |acc, p| (acc.0 + usize::from(p), acc.1 + 1));
    audit_check(
        "ts",
        report.metrics.ts,
        if valid == 0 { 0.0 } else { passed as f64 / valid as f64 },
    )?;

    for row in &report.per_threshold {
        let comp: Vec<(f64, bool, bool)> = diags
            .iter()
            .filter_map(|d| match d {
                Diagnostic::Completeness { threshold, csdc, preserved, deletion_changed, .. }
                    if *threshold == row.threshold =>
                {
                    Some((*csdc, *preserved, *deletion_changed))
                }
                _ => None,
            })
            .collect();
        if comp.is_empty() {
            return Err(Error::Data(format!(
                "report audit failed: no completeness diagnostics at t = {}",
                row.threshold
            )));
        }
        let n = comp.len() as f64;
        audit_check("csdc", row.csdc, comp.iter().map(|r| r.0).sum::<f64>() / n)?;
        audit_check("pc", row.pc, comp.iter().filter(|r| r.1).count() as f64 / n)?;
        audit_check("dc", row.dc, comp.iter().filter(|r| r.2).count() as f64 / n)?;

        let (spared, stable) = diags
            .iter()
            .filter_map(|d| match d {
                Diagnostic::Distraction { threshold, spared_parts, stable_parts, .. }
                    if *threshold == row.threshold =>
                {
                    Some((*spared_parts, *stable_parts))
                }
                _ => None,
            })
            .fold((0usize, 0usize), |acc, x| (acc.0 + x.0, acc.1 + x.1));
        audit_check(
            "d",
            row.d,
            if spared == 0 { 0.0 } else { stable as f64 / spared as f64 },
        )?;
    }

    let best = |pick: fn(&ThresholdMetrics) -> f64| {
        report.per_threshold.iter().map(pick).fold(0.0f64, f64::max)
    };
    audit_check("best csdc", report.metrics.csdc, best(|r| r.csdc))?;
    audit_check("best pc", report.metrics.pc, best(|r| r.pc))?;
    audit_check("best dc", report.metrics.dc, best(|r| r.dc))?;
    audit_check("best d", report.metrics.d, best(|r| r.d))?;
    Ok(())
}

/// Irregular slot-name aliases seen in the wild.
const SLOT_ALIASES: [(&str, &str); 3] = [("legs", "feet"), ("leg", "feet"), ("foot", "feet")];

/// Map a user-supplied part name onto a vocabulary slot, accepting
/// singular/plural variations and a few irregular aliases.
pub fn resolve_slot(vocabulary: &PartVocabulary, name: &str) -> Result<String> {
    let wanted = name.trim().to_lowercase();
    let has = |s: &str| vocabulary.part_slots.iter().any(|slot| slot == s);
    if has(&wanted) {
        return Ok(wanted);
    }
    for (alias, canonical) in SLOT_ALIASES {
        if wanted == alias && has(canonical) {
            return Ok(canonical.to_string());
        }
    }
    let plural = format!("{wanted}s");
    if has(&plural) {
        return Ok(plural);
    }
    if let Some(singular) = wanted.strip_suffix('s') {
        if has(singular) {
            return Ok(singular.to_string());
        }
    }
    Err(Error::Config(format!(
        "unknown part '{name}'; known slots: {}",
        vocabulary.part_slots.join(", ")
    )))
}
