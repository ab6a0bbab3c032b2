//! Global exemplar screening: distance-map threshold, largest-scale-first
//! selection and smallest-distance fill.

use std::cmp::Ordering;

use crate::error::{invalid, Result};
use crate::features::MatchMaps;
use crate::retrieval::ExemplarCandidate;
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    /// Upper bound on mean(D) for a candidate to pass.
    pub delta: f64,
    /// Number of references handed to alignment.
    pub k: usize,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self { delta: 0.1, k: 3 }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(invalid("selection delta must be positive"));
        }
        Ok(())
    }
}

pub type ScoredCandidate<T> = (ExemplarCandidate<T>, MatchMaps<T>);

#[derive(Clone, Debug, PartialEq)]
pub struct SelectedReferences<T> {
    /// Exactly `k` entries: passing candidates first, then fill.
    pub refs: Vec<ScoredCandidate<T>>,
    /// Entries taken from candidates that failed the threshold.
    pub fill_count: usize,
    /// Entries that repeat the first reference because fewer than `k`
    /// candidates existed.
    pub padded: usize,
}

impl<T> SelectedReferences<T> {
    pub fn degenerate(&self) -> bool {
        self.padded > 0
    }
}

fn tail_order<T: Real>(a: &ExemplarCandidate<T>, b: &ExemplarCandidate<T>) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then(a.source_frame.cmp(&b.source_frame))
        .then((a.location.1, a.location.0).cmp(&(b.location.1, b.location.0)))
}

/// Applies the threshold-then-largest-scale rule.
pub fn select<T: Real>(candidates: &[ScoredCandidate<T>], cfg: &SelectionConfig) -> Result<SelectedReferences<T>> {
    cfg.validate()?;
    if cfg.k == 0 {
        return Err(invalid("k must be >= 1"));
    }
    if candidates.is_empty() {
        return Err(invalid("no candidates to select from"));
    }
    let (mut pass, mut fail): (Vec<_>, Vec<_>) = candidates
        .iter()
        .map(|c| (c.1.mean_distance(), c))
        .partition(|(d, _)| *d <= cfg.delta);

    pass.sort_by(|(_, a), (_, b)| {
        b.0.scale
            .partial_cmp(&a.0.scale)
            .unwrap_or(Ordering::Equal)
            .then_with(|| tail_order(&a.0, &b.0))
    });
    fail.sort_by(|(da, a), (db, b)| {
        da.partial_cmp(db)
            .unwrap_or(Ordering::Equal)
            .then(b.0.scale.partial_cmp(&a.0.scale).unwrap_or(Ordering::Equal))
            .then_with(|| tail_order(&a.0, &b.0))
    });

    let mut refs: Vec<ScoredCandidate<T>> = pass.iter().take(cfg.k).map(|(_, c)| (*c).clone()).collect();
    let passing = refs.len();
    refs.extend(fail.iter().take(cfg.k - passing).map(|(_, c)| (*c).clone()));
    let fill_count = refs.len() - passing;
    let padded = cfg.k - refs.len();
    if padded > 0 {
        log::warn!("only {} candidates for k = {}; repeating the best", refs.len(), cfg.k);
        let first = refs[0].clone();
        refs.extend(std::iter::repeat_n(first, padded));
    }
    Ok(SelectedReferences {
        refs,
        fill_count,
        padded,
    })
}
