//! Label-distribution estimators.
//!
//! * Monte Carlo reconstruction: map each sampled completion to a class and
//!   count, `p(y_j|x) ≈ (1/n) Σ_i 1[i ∈ v_j]`, renormalized over matched
//!   samples.
//! * Log-probability reconstruction: sum `exp(lp_i)` of the top-k first
//!   tokens falling in each class's valid options, then normalize across
//!   classes.
//!
//! When nothing maps to any class both fall back to uniform and set
//! `fallback`.

use crate::backends::TokenLogprob;
use crate::labels::{CategoricalDistribution, LabelSpace};
use crate::verbalization::{normalize_output, OptionLexicon, PromptType};
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

pub const DEFAULT_MCR_SAMPLES: usize = 500;
pub const DEFAULT_LPR_TOP_K: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Mcr,
    Lpr,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Mcr => "MCR",
            Self::Lpr => "LPR",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mcr" => Ok(Self::Mcr),
            "lpr" => Ok(Self::Lpr),
            _ => Err(format!("unknown method `{s}` (expected mcr or lpr)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReconstructionError {
    #[error("no samples to reconstruct from")]
    EmptySampleList,
    #[error("no log probabilities to reconstruct from")]
    EmptyLogprobs,
    #[error("log-probability reconstruction needs a single-token (number-selection) lexicon")]
    MultiTokenLexicon,
    #[error("logprob for token `{token}` is {value}, expected a finite value <= 0")]
    InvalidLogprob { token: String, value: f64 },
}

/// Method-specific diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum Provenance {
    Mcr {
        n_samples: usize,
        /// Samples that mapped to no class.
        invalid_count: usize,
        /// Matched samples per class, canonical order.
        class_counts: Vec<usize>,
    },
    Lpr {
        /// Number of token candidates inspected.
        k: usize,
        /// Probability mass on valid options before renormalization.
        matched_mass: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionResult {
    pub distribution: CategoricalDistribution,
    pub provenance: Provenance,
    pub fallback: bool,
}

impl ReconstructionResult {
    pub fn method(&self) -> Method {
        match self.provenance {
            Provenance::Mcr { .. } => Method::Mcr,
            Provenance::Lpr { .. } => Method::Lpr,
        }
    }

    pub fn invalid_count(&self) -> usize {
        match self.provenance {
            Provenance::Mcr { invalid_count, .. } => invalid_count,
            Provenance::Lpr { .. } => 0,
        }
    }

    /// The unrenormalized `(1/n)·count` estimate; sums to less than 1 when
    /// samples were unmatched. `None` for LPR results.
    pub fn raw_mcr_estimate(&self) -> Option<Vec<f64>> {
        match &self.provenance {
            Provenance::Mcr {
                n_samples,
                class_counts,
                ..
            } => Some(
                class_counts
                    .iter()
                    .map(|&c| c as f64 / *n_samples as f64)
                    .collect(),
            ),
            Provenance::Lpr { .. } => None,
        }
    }
}

pub fn mcr<S: AsRef<str>>(
    samples: &[S],
    lexicon: &OptionLexicon,
) -> Result<ReconstructionResult, ReconstructionError> {
    if samples.is_empty() {
        return Err(ReconstructionError::EmptySampleList);
    }
    let space = lexicon.space();
    let mut counts = vec![0usize; space.len()];
    let mut invalid = 0;
    for sample in samples {
        match lexicon.map_output(sample.as_ref()).class() {
            Some(class) => counts[class.0] += 1,
            None => invalid += 1,
        }
    }
    let (distribution, fallback) =
        normalize_or_uniform(&counts.iter().map(|&c| c as f64).collect::<Vec<_>>(), space);
    Ok(ReconstructionResult {
        distribution,
        provenance: Provenance::Mcr {
            n_samples: samples.len(),
            invalid_count: invalid,
            class_counts: counts,
        },
        fallback,
    })
}

pub fn lpr(
    top_logprobs: &[TokenLogprob],
    lexicon: &OptionLexicon,
) -> Result<ReconstructionResult, ReconstructionError> {
    if top_logprobs.is_empty() {
        return Err(ReconstructionError::EmptyLogprobs);
    }
    if lexicon.prompt_type() != PromptType::NumberSelection {
        return Err(ReconstructionError::MultiTokenLexicon);
    }
    let space = lexicon.space();
    let mut mass = vec![0.0f64; space.len()];
    for tl in top_logprobs {
        if tl.logprob.is_nan() || tl.logprob > 0.0 {
            return Err(ReconstructionError::InvalidLogprob {
                token: tl.token.clone(),
                value: tl.logprob,
            });
        }
        if let Some(class) = lexicon.lookup_exact(&normalize_output(&tl.token)) {
            mass[class.0] += tl.logprob.exp();
        }
    }
    let matched_mass: f64 = mass.iter().sum();
    let (distribution, fallback) = normalize_or_uniform(&mass, space);
    Ok(ReconstructionResult {
        distribution,
        provenance: Provenance::Lpr {
            k: top_logprobs.len(),
            matched_mass,
        },
        fallback,
    })
}

fn normalize_or_uniform(weights: &[f64], space: LabelSpace) -> (CategoricalDistribution, bool) {
    match CategoricalDistribution::from_weights(weights, space) {
        Ok(d) => (d, false),
        Err(_) => (CategoricalDistribution::uniform(space), true),
    }
}
