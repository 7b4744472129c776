//! Rank correlation with average-rank tie handling.

use crate::error::{Error, Result};

/// A vector of finite scores that can be ranked.
#[derive(Debug, Clone, PartialEq)]
pub struct RankableScores(Vec<f64>);

impl RankableScores {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::Data(format!(
                "need at least 2 scores to rank, got {}",
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Data(format!("scores must be finite, got {bad}")));
        }
        Ok(Self(values))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    /// Average ranks, 1-based: tied values share the mean of the ranks
    /// they would occupy.
    pub fn ranks(&self) -> Vec<f64> {
        let n = self.0.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            self.0[a].partial_cmp(&self.0[b]).expect("finite by construction")
        });
        let mut ranks = vec![0.0f64; n];
        let mut i = 0;
        while i < n {
            let mut j = i;
            while j + 1 < n && self.0[order[j + 1]] == self.0[order[i]] {
                j += 1;
            }
            // positions i..=j are one tie group; ranks are 1-based
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &idx in &order[i..=j] {
                ranks[idx] = avg;
            }
            i = j + 1;
        }
        ranks
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpearmanResult {
    pub rho: f64,
    /// True when either input was constant; `rho` is 0 by convention.
    pub constant_input: bool,
}

/// Spearman correlation: Pearson correlation of the average ranks.
/// A constant input has no rank ordering, so the result is pinned to 0
/// and flagged rather than left undefined.
pub fn spearman(a: &RankableScores, b: &RankableScores) -> Result<SpearmanResult> {
    if a.len() != b.len() {
        return Err(Error::Data(format!(
            "rank vectors differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let ra = a.ranks();
    let rb = b.ranks();
    let n = ra.len() as f64;
    let mean_a = ra.iter().sum::<f64>() / n;
    let mean_b = rb.iter().sum::<f64>() / n;
    let mut cov = 0.0f64;
    let mut var_a = 0.0f64;
    let mut var_b = 0.0f64;
    for (x, y) in ra.iter().zip(&rb) {
        let da = x - mean_a;
        let db = y - mean_b;
        cov += da * db;
        var_a += da * da;
        var_b += db * db;
    }
    if var_a == 0.0 || var_b == 0.0 {
        return Ok(SpearmanResult { rho: 0.0, constant_input: true });
    }
    Ok(SpearmanResult { rho: cov / (var_a * var_b).sqrt(), constant_input: false })
}
