//! From pixel attribution to part-level statements.
//!
//! `part_importance` pools an attribution map over part masks; every
//! unit of attribution lands either in exactly one part score or in the
//! background residual, and the pieces add back to the grid total.
//! The two `important_parts_*` functions turn a map into the set of
//! parts an explanation marks as relevant at threshold t, each using
//! the membership rule matching its attribution style.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::attribution::AttributionGrid;
use crate::error::{Error, Result};
use crate::grid::{kahan_sum, Mask};

/// Attribution pooled per part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartImportance {
    pub scores: BTreeMap<String, f64>,
    /// Attribution on pixels no mask claims.
    pub background_residual: f64,
    /// Sum over the whole grid; parts plus residual reproduce this.
    pub total_mass: f64,
    /// Slots whose masks cover zero pixels, left out of `scores`.
    pub excluded_slots: Vec<String>,
}

impl PartImportance {
    pub fn score(&self, slot: &str) -> Option<f64> {
        self.scores.get(slot).copied()
    }
}

/// Membership rule a part set was built with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImportanceRule {
    /// Fraction of the part's pixels touched by positive attribution.
    BoxOverlap,
    /// Part's share of the grid's total attribution mass.
    MassShare,
}

/// Parts judged important at one threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartSet {
    pub members: BTreeSet<String>,
    pub threshold: f64,
    pub rule: ImportanceRule,
    /// Degenerate-input notes, e.g. a zero-mass attribution map.
    pub flags: Vec<String>,
}

impl PartSet {
    pub fn contains(&self, slot: &str) -> bool {
        self.members.contains(slot)
    }
}

fn check_dims(att: &AttributionGrid, masks: &BTreeMap<String, Mask>) -> Result<()> {
    for (slot, mask) in masks {
        if mask.rows != att.rows || mask.cols != att.cols {
            return Err(Error::Dimension(format!(
                "mask '{slot}' is {}x{} but attribution is {}x{}",
                mask.rows, mask.cols, att.rows, att.cols
            )));
        }
    }
    Ok(())
}

/// Pool attribution over part masks. Masks must be pairwise disjoint;
/// the per-part scores plus the background residual then account for
/// every pixel exactly once.
pub fn part_importance(
    att: &AttributionGrid,
    masks: &BTreeMap<String, Mask>,
) -> Result<PartImportance> {
    check_dims(att, masks)?;
    let mut coverage = vec![false; att.rows * att.cols];
    for (slot, mask) in masks {
        for (i, &bit) in mask.bits.iter().enumerate() {
            if bit != 0 {
                if coverage[i] {
                    return Err(Error::Data(format!(
                        "mask '{slot}' overlaps another mask at pixel ({}, {})",
                        i / att.cols,
                        i % att.cols
                    )));
                }
                coverage[i] = true;
            }
        }
    }

    let mut scores = BTreeMap::new();
    let mut excluded_slots = Vec::new();
    for (slot, mask) in masks {
        if mask.area() == 0 {
            excluded_slots.push(slot.clone());
            continue;
        }
        let s = kahan_sum(
            mask.bits
                .iter()
                .zip(&att.values)
                .filter(|(&bit, _)| bit != 0)
                .map(|(_, &v)| v),
        );
        scores.insert(slot.clone(), s);
    }
    let background_residual = kahan_sum(
        coverage
            .iter()
            .zip(&att.values)
            .filter(|(&covered, _)| !covered)
            .map(|(_, &v)| v),
    );
    Ok(PartImportance {
        scores,
        background_residual,
        total_mass: att.total(),
        excluded_slots,
    })
}

/// Box-style membership: a part is important at threshold t when at
/// least a t-fraction of its pixels carry positive attribution. At
/// t = 0 every present part qualifies.
pub fn important_parts_bb(
    att: &AttributionGrid,
    masks: &BTreeMap<String, Mask>,
    threshold: f64,
) -> Result<PartSet> {
    check_dims(att, masks)?;
    validate_threshold(threshold)?;
    let mut members = BTreeSet::new();
    let mut flags = Vec::new();
    for (slot, mask) in masks {
        let area = mask.area();
        if area == 0 {
            flags.push(format!("slot '{slot}' has an empty mask"));
            continue;
        }
        let covered = mask
            .bits
            .iter()
            .zip(&att.values)
            .filter(|(&bit, &v)| bit != 0 && v > 0.0)
            .count();
        if covered as f64 / area as f64 >= threshold {
            members.insert(slot.clone());
        }
    }
    Ok(PartSet { members, threshold, rule: ImportanceRule::BoxOverlap, flags })
}

/// Mass-share membership: a part is important at threshold t when its
/// pooled score strictly exceeds a t-share of the grid's total mass.
pub fn important_parts_ssm(
    att: &AttributionGrid,
    masks: &BTreeMap<String, Mask>,
    threshold: f64,
) -> Result<PartSet> {
    validate_threshold(threshold)?;
    let importance = part_importance(att, masks)?;
    let mut flags: Vec<String> = importance
        .excluded_slots
        .iter()
        .map(|slot| format!("slot '{slot}' has an empty mask"))
        .collect();
    let mut members = BTreeSet::new();
    if importance.total_mass <= 0.0 {
        flags.push("attribution map has no positive mass".into());
    } else {
        for (slot, &score) in &importance.scores {
            if score > threshold * importance.total_mass {
                members.insert(slot.clone());
            }
        }
    }
    Ok(PartSet { members, threshold, rule: ImportanceRule::MassShare, flags })
}

fn validate_threshold(threshold: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Config(format!(
            "importance threshold must be in [0, 1], got {threshold}"
        )));
    }
    Ok(())
}
