//! Serializable evaluation results.
//!
//! A report carries the aggregate numbers plus one diagnostic record per
//! elementary observation, enough to recompute every aggregate without
//! rerunning the pipeline.

use serde::{Deserialize, Serialize};

use super::{EvalConfig, Method};

/// Final aggregates, one per metric column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub accuracy: f64,
    pub bi: f64,
    pub csdc: f64,
    pub pc: f64,
    pub dc: f64,
    pub d: f64,
    pub sd: f64,
    pub ts: f64,
}

impl MetricSummary {
    /// Column order used by every rendered table.
    pub fn in_table_order(&self) -> [(&'static str, f64); 8] {
        [
            ("Accuracy", self.accuracy),
            ("BI", self.bi),
            ("CSDC", self.csdc),
            ("PC", self.pc),
            ("DC", self.dc),
            ("D", self.d),
            ("SD", self.sd),
            ("TS", self.ts),
        ]
    }

    pub fn values(&self) -> [f64; 8] {
        self.in_table_order().map(|(_, v)| v)
    }
}

/// Threshold-dependent metrics at one threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdMetrics {
    pub threshold: f64,
    pub csdc: f64,
    pub pc: f64,
    pub dc: f64,
    pub d: f64,
}

/// One elementary observation feeding an aggregate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Diagnostic {
    /// Feeds accuracy.
    Prediction {
        scene_id: String,
        true_class: usize,
        predicted_class: usize,
        true_class_logit: f64,
    },
    /// Feeds background independence; one record per background draw.
    BackgroundDraw { scene_id: String, draw: usize, stable: bool },
    /// Feeds single deletion; excluded scenes have too few parts.
    DeletionRanking {
        scene_id: String,
        rho: f64,
        constant_input: bool,
        n_parts: usize,
        included: bool,
    },
    /// Feeds target sensitivity; degenerate pairs share too much.
    Chimera {
        index: usize,
        class_a: usize,
        class_b: usize,
        degenerate: bool,
        passed: bool,
        a_parts_share_for_a: f64,
        a_parts_share_for_b: f64,
        b_parts_share_for_a: f64,
        b_parts_share_for_b: f64,
    },
    /// Feeds CSDC, PC, and DC at one threshold.
    Completeness {
        scene_id: String,
        threshold: f64,
        csdc: f64,
        preserved: bool,
        deletion_changed: bool,
    },
    /// Feeds distractibility at one threshold: of the present parts the
    /// explanation spared, how many the model provably ignores.
    Distraction {
        scene_id: String,
        threshold: f64,
        spared_parts: usize,
        stable_parts: usize,
    },
}

/// Complete evaluation output for one method on one dataset and model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub method: Method,
    pub config: EvalConfig,
    pub metrics: MetricSummary,
    pub per_threshold: Vec<ThresholdMetrics>,
    pub diagnostics: Vec<Diagnostic>,
}
