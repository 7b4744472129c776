//! Side-by-side comparison of the two explanation strategies.
//!
//! The expected picture: summed maps win on single deletion,
//! distractibility, and target sensitivity; boxes win on the three
//! completeness metrics. `compare` normalizes argument order, so the
//! table and verdict do not depend on which report comes first.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{Method, MetricReport, MetricSummary};

/// Did the expected metric ordering hold on this run?
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// Every expected direction holds, at least one strictly.
    Holds,
    /// No expected direction is violated, but none is strict either.
    Inconclusive,
    /// At least one expected direction is strictly reversed.
    Violated,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Holds => "holds",
            Verdict::Inconclusive => "inconclusive",
            Verdict::Violated => "violated",
        })
    }
}

/// Metrics where the summed-map strategy is expected to score at least
/// as high as boxes; the rest of the comparable metrics run the other
/// way. Accuracy and background independence describe the model, not
/// the explanation, and carry no expectation.
const SSM_FAVORED: [&str; 3] = ["SD", "D", "TS"];
const BB_FAVORED: [&str; 3] = ["CSDC", "PC", "DC"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub metric: String,
    pub bb: f64,
    pub ssm: f64,
    /// ssm minus bb, regardless of argument order.
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
    pub verdict: Verdict,
}

impl ComparisonTable {
    pub fn row(&self, metric: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.metric == metric)
    }

    /// Render in fixed row order with the delta column last.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,bb,ssm,delta\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{:.4},{:.4},{:+.4}\n",
                row.metric, row.bb, row.ssm, row.delta
            ));
        }
        out
    }
}

fn verdict_for(rows: &[ComparisonRow]) -> Verdict {
    let mut any_strict = false;
    for row in rows {
        let expected_sign = if SSM_FAVORED.contains(&row.metric.as_str()) {
            1.0
        } else if BB_FAVORED.contains(&row.metric.as_str()) {
            -1.0
        } else {
            continue;
        };
        let oriented = row.delta * expected_sign;
        if oriented < 0.0 {
            return Verdict::Violated;
        }
        if oriented > 0.0 {
            any_strict = true;
        }
    }
    if any_strict {
        Verdict::Holds
    } else {
        Verdict::Inconclusive
    }
}

fn table_from(bb: &MetricSummary, ssm: &MetricSummary) -> ComparisonTable {
    let rows: Vec<ComparisonRow> = bb
        .in_table_order()
        .iter()
        .zip(ssm.in_table_order().iter())
        .map(|((name, bb_v), (_, ssm_v))| ComparisonRow {
            metric: name.to_string(),
            bb: *bb_v,
            ssm: *ssm_v,
            delta: ssm_v - bb_v,
        })
        .collect();
    let verdict = verdict_for(&rows);
    ComparisonTable { rows, verdict }
}

/// Compare two reports from the same configuration, one per method.
pub fn compare(a: &MetricReport, b: &MetricReport) -> Result<ComparisonTable> {
    if a.method == b.method {
        return Err(Error::Config(format!(
            "need one report per method, got '{}' twice",
            a.method
        )));
    }
    if a.config != b.config {
        return Err(Error::Config(
            "reports were produced under different evaluation configs".into(),
        ));
    }
    let (bb, ssm) = match a.method {
        Method::BoundingBox => (&a.metrics, &b.metrics),
        Method::SummedMaps => (&b.metrics, &a.metrics),
    };
    Ok(table_from(bb, ssm))
}
