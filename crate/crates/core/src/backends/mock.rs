use super::{
    top_k, Backend, BackendDescriptor, BackendError, BackendKind, GenerationConfig, TokenLogprob,
};
use crate::labels::LabelSpace;
use crate::rng::{derive_seed, SeededRng};
use std::sync::atomic::{AtomicU64, Ordering};

/// Deterministic stand-in for a model with a known output distribution.
///
/// Sample `i` for a prompt is drawn from its own stream seeded by
/// SHA-256(seed, config seed, prompt, i), so results do not depend on call
/// order, batching, or concurrency.
#[derive(Debug)]
pub struct MockBackend {
    descriptor: BackendDescriptor,
    completions: Vec<(String, f64)>,
    total_weight: f64,
    token_probs: Vec<(String, f64)>,
    seed: u64,
    requests: AtomicU64,
}

impl MockBackend {
    /// `completions` are relative weights; `token_probs` are first-token
    /// probabilities summing to at most 1.
    pub fn new(
        id: impl Into<String>,
        completions: Vec<(String, f64)>,
        token_probs: Vec<(String, f64)>,
        seed: u64,
    ) -> Result<Self, BackendError> {
        let id = id.into();
        if completions.is_empty() && token_probs.is_empty() {
            return Err(BackendError::InvalidRequest(format!(
                "mock `{id}` needs completions or token probabilities"
            )));
        }
        if completions
            .iter()
            .any(|(_, w)| !(w.is_finite() && *w >= 0.0))
        {
            return Err(BackendError::InvalidRequest(format!(
                "mock `{id}`: completion weights must be nonnegative"
            )));
        }
        let total_weight: f64 = completions.iter().map(|(_, w)| w).sum();
        if !completions.is_empty() && total_weight <= 0.0 {
            return Err(BackendError::InvalidRequest(format!(
                "mock `{id}`: completion weights sum to zero"
            )));
        }
        if token_probs.iter().any(|(_, p)| !(*p > 0.0 && *p <= 1.0)) {
            return Err(BackendError::InvalidRequest(format!(
                "mock `{id}`: token probabilities must lie in (0, 1]"
            )));
        }
        if token_probs.iter().map(|(_, p)| p).sum::<f64>() > 1.0 + 1e-9 {
            return Err(BackendError::InvalidRequest(format!(
                "mock `{id}`: token probabilities exceed 1"
            )));
        }
        let mut descriptor = BackendDescriptor::new(id, BackendKind::Mock, !token_probs.is_empty());
        descriptor.chat_template = false;
        Ok(Self {
            descriptor,
            completions,
            total_weight,
            token_probs,
            seed,
            requests: AtomicU64::new(0),
        })
    }

    pub fn with_chat_template(mut self, chat: bool) -> Self {
        self.descriptor.chat_template = chat;
        self
    }

    fn draw(&self, prompt: &str, ordinal: u64, config: &GenerationConfig) -> String {
        let config_seed = config.seed.map(u64::to_le_bytes).unwrap_or_default();
        let stream = derive_seed(&[
            &self.seed.to_le_bytes(),
            &config_seed,
            prompt.as_bytes(),
            &ordinal.to_le_bytes(),
        ]);
        let target = SeededRng::new(stream).next_f64() * self.total_weight;
        let mut acc = 0.0;
        for (text, w) in &self.completions {
            acc += w;
            if target < acc {
                return text.clone();
            }
        }
        // rounding at the top end
        self.completions
            .iter()
            .rev()
            .find(|(_, w)| *w > 0.0)
            .map(|(t, _)| t.clone())
            .expect("weights sum to a positive value")
    }
}

impl Backend for MockBackend {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn sample_completions(
        &self,
        prompt: &str,
        first_ordinal: u64,
        n: usize,
        config: &GenerationConfig,
    ) -> Result<Vec<String>, BackendError> {
        config.validate()?;
        if self.completions.is_empty() {
            return Err(BackendError::InvalidRequest(format!(
                "mock `{}` has no completion weights",
                self.descriptor.id
            )));
        }
        self.requests.fetch_add(1, Ordering::Relaxed);
        Ok((first_ordinal..first_ordinal + n as u64)
            .map(|i| self.draw(prompt, i, config))
            .collect())
    }

    fn first_token_logprobs(
        &self,
        _prompt: &str,
        config: &GenerationConfig,
    ) -> Result<Vec<TokenLogprob>, BackendError> {
        config.validate()?;
        if self.token_probs.is_empty() {
            return Err(BackendError::LogprobsUnsupported(
                self.descriptor.id.clone(),
            ));
        }
        self.requests.fetch_add(1, Ordering::Relaxed);
        let all = self
            .token_probs
            .iter()
            .map(|(token, p)| TokenLogprob {
                token: token.clone(),
                logprob: p.ln(),
            })
            .collect();
        Ok(top_k(all, config.top_k_logprobs))
    }

    fn request_count(&self) -> u64 {
        self.requests.load(Ordering::Relaxed)
    }
}

/// The chance baseline as a backend: every class equally likely.
///
/// Completions cycle through `"{number}: {name}"` by ordinal, which maps to
/// the intended class under both number- and option-selection lexicons.
/// Log probabilities are `ln(1/k)` for the option numbers.
#[derive(Debug)]
pub struct UniformBackend {
    descriptor: BackendDescriptor,
    space: LabelSpace,
    requests: AtomicU64,
}

impl UniformBackend {
    pub fn new(id: impl Into<String>, space: LabelSpace) -> Self {
        Self {
            descriptor: BackendDescriptor::new(id, BackendKind::Uniform, true),
            space,
            requests: AtomicU64::new(0),
        }
    }

    pub fn space(&self) -> LabelSpace {
        self.space
    }
}

impl Backend for UniformBackend {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn sample_completions(
        &self,
        _prompt: &str,
        first_ordinal: u64,
        n: usize,
        _config: &GenerationConfig,
    ) -> Result<Vec<String>, BackendError> {
        self.requests.fetch_add(1, Ordering::Relaxed);
        let k = self.space.len() as u64;
        Ok((first_ordinal..first_ordinal + n as u64)
            .map(|i| {
                let idx = (i % k) as usize;
                format!("{}: {}", idx + 1, self.space.display_names()[idx])
            })
            .collect())
    }

    fn first_token_logprobs(
        &self,
        _prompt: &str,
        config: &GenerationConfig,
    ) -> Result<Vec<TokenLogprob>, BackendError> {
        self.requests.fetch_add(1, Ordering::Relaxed);
        let lp = (1.0 / self.space.len() as f64).ln();
        let all = (1..=self.space.len())
            .map(|i| TokenLogprob {
                token: i.to_string(),
                logprob: lp,
            })
            .collect();
        Ok(top_k(all, config.top_k_logprobs))
    }

    fn request_count(&self) -> u64 {
        self.requests.load(Ordering::Relaxed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{first_token_logprobs, sample_completions};

    fn mock(seed: u64) -> MockBackend {
        MockBackend::new(
            "m",
            vec![("1".into(), 3.0), ("2".into(), 1.0)],
            vec![
                ("1".into(), 0.6),
                ("2".into(), 0.3),
                ("3".into(), 0.05),
                ("yes".into(), 0.04),
                ("no".into(), 0.01),
            ],
            seed,
        )
        .unwrap()
    }

    #[test]
    fn samples_are_reproducible() {
        let cfg = GenerationConfig::for_mcr();
        let a = sample_completions(&mock(11), "p", 4, &cfg).unwrap();
        let b = sample_completions(&mock(11), "p", 4, &cfg).unwrap();
        assert_eq!(a.len(), 4);
        assert_eq!(a, b);
        assert!(a.iter().all(|s| s == "1" || s == "2"));
    }

    #[test]
    fn ordinals_partition_the_stream() {
        let m = mock(5);
        let cfg = GenerationConfig::for_mcr();
        let whole = m.sample_completions("p", 0, 10, &cfg).unwrap();
        let mut parts = m.sample_completions("p", 0, 4, &cfg).unwrap();
        parts.extend(m.sample_completions("p", 4, 6, &cfg).unwrap());
        assert_eq!(whole, parts);
        assert_eq!(m.request_count(), 3);
    }

    #[test]
    fn config_seed_changes_draws() {
        let m = mock(5);
        let mut cfg = GenerationConfig::for_mcr();
        let a = m.sample_completions("p", 0, 64, &cfg).unwrap();
        cfg.seed = Some(9);
        let b = m.sample_completions("p", 0, 64, &cfg).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn logprobs_echo_configuration() {
        let m = mock(0);
        let mut cfg = GenerationConfig::for_lpr();
        let lps = first_token_logprobs(&m, "p", &cfg).unwrap();
        let expected = [
            ("1", 0.6f64),
            ("2", 0.3),
            ("3", 0.05),
            ("yes", 0.04),
            ("no", 0.01),
        ];
        assert_eq!(lps.len(), 5);
        for (got, (tok, p)) in lps.iter().zip(expected) {
            assert_eq!(got.token, tok);
            assert_eq!(got.logprob, p.ln());
        }
        cfg.top_k_logprobs = 2;
        let lps = first_token_logprobs(&m, "p", &cfg).unwrap();
        assert_eq!(lps.len(), 2);
        let mass: f64 = lps.iter().map(|t| t.logprob.exp()).sum();
        assert!((mass - 0.9).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_mock_config() {
        assert!(MockBackend::new("m", vec![], vec![], 0).is_err());
        assert!(MockBackend::new("m", vec![("a".into(), -1.0)], vec![], 0).is_err());
        assert!(
            MockBackend::new("m", vec![], vec![("a".into(), 0.7), ("b".into(), 0.7)], 0).is_err()
        );
        let no_lp = MockBackend::new("m", vec![("a".into(), 1.0)], vec![], 0).unwrap();
        assert!(matches!(
            first_token_logprobs(&no_lp, "p", &GenerationConfig::for_lpr()),
            Err(BackendError::LogprobsUnsupported(_))
        ));
    }

    #[test]
    fn uniform_backend_cycles() {
        let u = UniformBackend::new("uniform", LabelSpace::three_way());
        let s = u
            .sample_completions("p", 0, 4, &GenerationConfig::for_mcr())
            .unwrap();
        assert_eq!(
            s,
            vec![
                "1: entailment",
                "2: contradiction",
                "3: neutral",
                "1: entailment"
            ]
        );
        let lps = u
            .first_token_logprobs("p", &GenerationConfig::for_lpr())
            .unwrap();
        assert_eq!(lps.len(), 3);
        assert!(lps.iter().all(|t| t.logprob == (1.0f64 / 3.0).ln()));
    }
}
