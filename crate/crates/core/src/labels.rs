//! Label spaces and normalized categorical distributions.
//!
//! Every estimator and metric in the crate speaks [`CategoricalDistribution`].
//! Class order is canonical and mirrors the numbering used by NS prompts:
//! `[1, 2]` for the two-choice task and `[e, c, n]` for three-way NLI.

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Absolute tolerance on the sum of a distribution.
pub const PROB_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    /// Pick which of two hypotheses explains the observations (ChaosNLI-α).
    TwoChoice,
    /// Entailment / contradiction / neutral (ChaosNLI-S, -M, PK2019).
    ThreeWay,
}

/// Index of a class within its [`LabelSpace`], in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassId(pub usize);

impl ClassId {
    pub fn index(self) -> usize {
        self.0
    }
}

const TWO_CODES: [&str; 2] = ["1", "2"];
const TWO_NAMES: [&str; 2] = ["Hypothesis 1", "Hypothesis 2"];
const THREE_CODES: [&str; 3] = ["e", "c", "n"];
const THREE_NAMES: [&str; 3] = ["entailment", "contradiction", "neutral"];

/// The ordered set of answer classes for a task.
///
/// Only the two canonical spaces exist, so a `LabelSpace` is a cheap copyable
/// handle around its [`TaskKind`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelSpace {
    task_kind: TaskKind,
}

impl LabelSpace {
    pub const fn new(task_kind: TaskKind) -> Self {
        Self { task_kind }
    }

    pub const fn two_choice() -> Self {
        Self::new(TaskKind::TwoChoice)
    }

    pub const fn three_way() -> Self {
        Self::new(TaskKind::ThreeWay)
    }

    pub fn task_kind(&self) -> TaskKind {
        self.task_kind
    }

    pub fn len(&self) -> usize {
        self.codes().len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Short class codes used in data files: `1`/`2` or `e`/`c`/`n`.
    pub fn codes(&self) -> &'static [&'static str] {
        match self.task_kind {
            TaskKind::TwoChoice => &TWO_CODES,
            TaskKind::ThreeWay => &THREE_CODES,
        }
    }

    pub fn display_names(&self) -> &'static [&'static str] {
        match self.task_kind {
            TaskKind::TwoChoice => &TWO_NAMES,
            TaskKind::ThreeWay => &THREE_NAMES,
        }
    }

    pub fn classes(&self) -> impl Iterator<Item = ClassId> {
        (0..self.len()).map(ClassId)
    }

    pub fn code(&self, class: ClassId) -> &'static str {
        self.codes()[class.0]
    }

    pub fn display_name(&self, class: ClassId) -> &'static str {
        self.display_names()[class.0]
    }

    /// Resolves a class from its code or display name, case-insensitively.
    /// Integer-like spellings of the NS numbers (`"1"`, `"2"`) are accepted
    /// for the two-choice space.
    pub fn parse_class(&self, label: &str) -> Option<ClassId> {
        let label = label.trim();
        self.codes()
            .iter()
            .zip(self.display_names())
            .position(|(code, name)| {
                label.eq_ignore_ascii_case(code) || label.eq_ignore_ascii_case(name)
            })
            .map(ClassId)
    }

    pub fn contains(&self, class: ClassId) -> bool {
        class.0 < self.len()
    }
}

impl fmt::Display for LabelSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}]", self.codes().join(", "))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistributionError {
    #[error("all weights are zero")]
    AllZeroWeights,
    #[error("weight {value} at index {index} is negative")]
    NegativeWeight { index: usize, value: f64 },
    #[error("weight at index {index} is not finite")]
    NonFinite { index: usize },
    #[error("expected {expected} weights, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("probabilities sum to {sum}, not 1")]
    NotNormalized { sum: f64 },
}

/// Normalized probability vector over a [`LabelSpace`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDistribution", into = "RawDistribution")]
pub struct CategoricalDistribution {
    space: LabelSpace,
    probs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawDistribution {
    space: TaskKind,
    probs: Vec<f64>,
}

impl TryFrom<RawDistribution> for CategoricalDistribution {
    type Error = DistributionError;

    fn try_from(raw: RawDistribution) -> Result<Self, Self::Error> {
        Self::from_probs(raw.probs, LabelSpace::new(raw.space))
    }
}

impl From<CategoricalDistribution> for RawDistribution {
    fn from(d: CategoricalDistribution) -> Self {
        RawDistribution {
            space: d.space.task_kind,
            probs: d.probs,
        }
    }
}

fn check_weights(weights: &[f64], space: LabelSpace) -> Result<f64, DistributionError> {
    if weights.len() != space.len() {
        return Err(DistributionError::LengthMismatch {
            expected: space.len(),
            actual: weights.len(),
        });
    }
    for (index, &w) in weights.iter().enumerate() {
        if !w.is_finite() {
            return Err(DistributionError::NonFinite { index });
        }
        if w < 0.0 {
            return Err(DistributionError::NegativeWeight { index, value: w });
        }
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(DistributionError::AllZeroWeights);
    }
    Ok(total)
}

impl CategoricalDistribution {
    /// Normalizes nonnegative weights into a distribution.
    pub fn from_weights(weights: &[f64], space: LabelSpace) -> Result<Self, DistributionError> {
        let total = check_weights(weights, space)?;
        Ok(Self {
            space,
            probs: weights.iter().map(|w| w / total).collect(),
        })
    }

    /// Accepts an already-normalized vector, rejecting sums off by more than
    /// [`PROB_TOLERANCE`].
    pub fn from_probs(probs: Vec<f64>, space: LabelSpace) -> Result<Self, DistributionError> {
        let sum = check_weights(&probs, space)?;
        if (sum - 1.0).abs() > PROB_TOLERANCE {
            return Err(DistributionError::NotNormalized { sum });
        }
        Ok(Self { space, probs })
    }

    pub fn uniform(space: LabelSpace) -> Self {
        let k = space.len();
        Self {
            space,
            probs: vec![1.0 / k as f64; k],
        }
    }

    /// Point mass on one class.
    pub fn one_hot(space: LabelSpace, class: ClassId) -> Self {
        let mut probs = vec![0.0; space.len()];
        probs[class.0] = 1.0;
        Self { space, probs }
    }

    pub fn space(&self) -> LabelSpace {
        self.space
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, class: ClassId) -> f64 {
        self.probs[class.0]
    }

    /// Most probable class; ties go to the lowest canonical index.
    pub fn argmax(&self) -> ClassId {
        argmax_index(&self.probs)
    }
}

/// Index of the maximum, first one wins on ties.
pub(crate) fn argmax_index<T: PartialOrd + Copy>(values: &[T]) -> ClassId {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    ClassId(best)
}

pub fn make_distribution(
    weights: &[f64],
    space: LabelSpace,
) -> Result<CategoricalDistribution, DistributionError> {
    CategoricalDistribution::from_weights(weights, space)
}

pub fn argmax_label(dist: &CategoricalDistribution) -> ClassId {
    dist.argmax()
}

pub fn uniform(space: LabelSpace) -> CategoricalDistribution {
    CategoricalDistribution::uniform(space)
}

/// Expected accuracy of a uniformly random guesser: `1 / k`.
pub fn chance_accuracy(space: LabelSpace) -> f64 {
    1.0 / space.len() as f64
}
