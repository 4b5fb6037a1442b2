//! Distances between model and human label distributions, plus accuracy.
//!
//! KL and JSD use base-2 logarithms ([`LOG_BASE`]) so JSD lies in `[0, 1]`.
//! DCE is half the L1 distance (total variation).

use crate::data::{human_distribution, Instance};
use crate::labels::{CategoricalDistribution, ClassId};
use crate::reconstruction::ReconstructionResult;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

pub const LOG_BASE: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("KL divergence is infinite: p[{index}] > 0 where q[{index}] = 0")]
    UnsupportedDivergence { index: usize },
    #[error("distributions live in different label spaces")]
    SpaceMismatch,
    #[error("predictions and gold disagree on uids (missing: {missing:?}, extra: {extra:?})")]
    UidMismatch {
        missing: Vec<String>,
        extra: Vec<String>,
    },
    #[error("instance `{0}` has no old label")]
    MissingOldLabel(String),
    #[error("no instances to score")]
    Empty,
    #[error("human distribution for `{0}` is invalid")]
    InvalidGold(String),
}

fn same_space(
    p: &CategoricalDistribution,
    q: &CategoricalDistribution,
) -> Result<(), MetricsError> {
    if p.space() == q.space() {
        Ok(())
    } else {
        Err(MetricsError::SpaceMismatch)
    }
}

/// Terms with `p_i = 0` contribute nothing; logs in [`LOG_BASE`].
fn kl_slices(p: &[f64], q: &[f64]) -> Result<f64, MetricsError> {
    let mut total = 0.0;
    for (index, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            return Err(MetricsError::UnsupportedDivergence { index });
        }
        total += pi * (pi / qi).log(LOG_BASE);
    }
    Ok(total)
}

pub fn kl(p: &CategoricalDistribution, q: &CategoricalDistribution) -> Result<f64, MetricsError> {
    same_space(p, q)?;
    Ok(kl_slices(p.probs(), q.probs())?.max(0.0))
}

/// Jensen-Shannon distance: square root of the mean KL to the midpoint.
pub fn jsd(p: &CategoricalDistribution, q: &CategoricalDistribution) -> Result<f64, MetricsError> {
    same_space(p, q)?;
    let m: Vec<f64> = p
        .probs()
        .iter()
        .zip(q.probs())
        .map(|(a, b)| 0.5 * (a + b))
        .collect();
    let div = 0.5
        * (kl_slices(p.probs(), &m).expect("midpoint supports p")
            + kl_slices(q.probs(), &m).expect("midpoint supports q"));
    Ok(div.clamp(0.0, 1.0).sqrt())
}

/// Distribution calibration error, `½‖p − q‖₁`.
pub fn dce(p: &CategoricalDistribution, q: &CategoricalDistribution) -> Result<f64, MetricsError> {
    same_space(p, q)?;
    let l1: f64 = p
        .probs()
        .iter()
        .zip(q.probs())
        .map(|(a, b)| (a - b).abs())
        .sum();
    Ok((0.5 * l1).min(1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceScore {
    pub uid: String,
    pub jsd: f64,
    pub dce: f64,
    pub predicted: ClassId,
    pub correct: bool,
    /// Correctness against the original single label, when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct_old: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Argmax agreement with the majority of the re-annotations.
    pub accuracy: f64,
    pub mean_jsd: f64,
    pub mean_dce: f64,
    /// Argmax agreement with the original labels; present only when every
    /// scored instance has one.
    pub accuracy_old: Option<f64>,
    /// Sorted by uid.
    pub per_instance: Vec<InstanceScore>,
}

impl MetricReport {
    /// Percentage-point change of accuracy when the gold label moves from the
    /// original single label to the re-annotation majority.
    pub fn accuracy_change(&self) -> Result<f64, MetricsError> {
        if let Some(s) = self.per_instance.iter().find(|s| s.correct_old.is_none()) {
            return Err(MetricsError::MissingOldLabel(s.uid.clone()));
        }
        let old = self
            .accuracy_old
            .ok_or_else(|| MetricsError::MissingOldLabel(String::new()))?;
        Ok(accuracy_change(self.accuracy, old))
    }
}

/// `100 × (new − old)` in percentage points.
pub fn accuracy_change(accuracy_new: f64, accuracy_old: f64) -> f64 {
    100.0 * (accuracy_new - accuracy_old)
}

pub fn score_instance(
    instance: &Instance,
    model: &CategoricalDistribution,
) -> Result<InstanceScore, MetricsError> {
    let human = human_distribution(instance)
        .map_err(|_| MetricsError::InvalidGold(instance.uid.clone()))?;
    let predicted = model.argmax();
    Ok(InstanceScore {
        uid: instance.uid.clone(),
        jsd: jsd(&human, model)?,
        dce: dce(&human, model)?,
        predicted,
        correct: predicted == instance.majority_label,
        correct_old: instance.old_label.map(|old| old == predicted),
    })
}

/// Aggregates already-computed per-instance scores into unweighted means.
pub fn aggregate(mut scores: Vec<InstanceScore>) -> Result<MetricReport, MetricsError> {
    if scores.is_empty() {
        return Err(MetricsError::Empty);
    }
    scores.sort_by(|a, b| a.uid.cmp(&b.uid));
    let n = scores.len() as f64;
    let mean = |f: &dyn Fn(&InstanceScore) -> f64| scores.iter().map(f).sum::<f64>() / n;
    let accuracy = mean(&|s| f64::from(u8::from(s.correct)));
    let mean_jsd = mean(&|s| s.jsd);
    let mean_dce = mean(&|s| s.dce);
    let accuracy_old = scores
        .iter()
        .map(|s| s.correct_old)
        .collect::<Option<Vec<bool>>>()
        .map(|v| v.iter().filter(|&&c| c).count() as f64 / n);
    Ok(MetricReport {
        accuracy,
        mean_jsd,
        mean_dce,
        accuracy_old,
        per_instance: scores,
    })
}

/// Scores model predictions against the human annotations of `gold`.
pub fn score(
    predictions: &BTreeMap<String, ReconstructionResult>,
    gold: &[Instance],
) -> Result<MetricReport, MetricsError> {
    let gold_uids: BTreeSet<&str> = gold.iter().map(|i| i.uid.as_str()).collect();
    let missing: Vec<String> = gold_uids
        .iter()
        .filter(|u| !predictions.contains_key(**u))
        .map(|u| u.to_string())
        .collect();
    let extra: Vec<String> = predictions
        .keys()
        .filter(|u| !gold_uids.contains(u.as_str()))
        .cloned()
        .collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(MetricsError::UidMismatch { missing, extra });
    }
    let scores = gold
        .iter()
        .map(|inst| score_instance(inst, &predictions[&inst.uid].distribution))
        .collect::<Result<Vec<_>, _>>()?;
    aggregate(scores)
}
