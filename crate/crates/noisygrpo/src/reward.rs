//! Rule-based rewards: answer accuracy, completion format, and their
//! additive combination into the semantic reward.

use crate::error::{Error, Result};
use std::fmt;
use std::sync::Arc;

const THINK_OPEN: &str = "<think>";
const THINK_CLOSE: &str = "</think>";

/// Maps text to a fixed-length unit-norm vector. Implementations must be
/// deterministic per input and safe for concurrent read-only use.
pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str) -> Vec<f64>;
}

/// Default embedder: hashed bag of words. Tokens are lowercased and split on
/// whitespace, each token increments one of `dim` buckets, and the bucket
/// vector is L2-normalized. Text with no tokens hashes the empty string so
/// the unit-norm contract still holds.
#[derive(Debug, Clone)]
pub struct HashedBagEmbedder {
    dim: usize,
}

impl HashedBagEmbedder {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding dimension must be positive"));
        }
        Ok(Self { dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

impl Default for HashedBagEmbedder {
    fn default() -> Self {
        Self { dim: 256 }
    }
}

impl Embedder for HashedBagEmbedder {
    fn embed(&self, text: &str) -> Vec<f64> {
        let mut buckets = vec![0.0f64; self.dim];
        let lowered = text.to_lowercase();
        let mut saw_token = false;
        for token in lowered.split_whitespace() {
            saw_token = true;
            buckets[(fnv1a(token) % self.dim as u64) as usize] += 1.0;
        }
        if !saw_token {
            buckets[(fnv1a("") % self.dim as u64) as usize] += 1.0;
        }
        let norm = buckets.iter().map(|v| v * v).sum::<f64>().sqrt();
        for v in &mut buckets {
            *v /= norm;
        }
        buckets
    }
}

fn fnv1a(token: &str) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for byte in token.as_bytes() {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnswerKind {
    YesNo,
    MultipleChoice,
    OpenEnded,
}

/// Ground truth for one task. The stored truth is kept in canonical form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnswerSpec {
    kind: AnswerKind,
    ground_truth: String,
}

impl AnswerSpec {
    pub fn new(kind: AnswerKind, ground_truth: impl AsRef<str>) -> Result<Self> {
        let canonical = canonicalize(ground_truth.as_ref());
        if canonical.is_empty() {
            return Err(Error::invalid("ground truth is empty after canonicalization"));
        }
        if kind == AnswerKind::YesNo && canonical != "yes" && canonical != "no" {
            return Err(Error::invalid(format!(
                "yes/no ground truth must canonicalize to \"yes\" or \"no\", got \"{canonical}\""
            )));
            }
        Ok(Self {
            kind,
            ground_truth: canonical,
        })
    }

    pub fn kind(&self) -> AnswerKind {
        self.kind
    }

    /// Canonicalized ground-truth text.
    pub fn ground_truth(&self) -> &str {
        &self.ground_truth
    }
}

/// Scoring knobs: the similarity threshold for open-ended answers, the
/// weight of the format reward in the semantic total, and the embedder that
/// backs similarity scoring.
#[derive(Clone)]
pub struct RewardConfig {
    pub tau: f64,
    pub format_weight: f64,
    pub embedder: Arc<dyn Embedder>,
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau.is_finite() && self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::invalid(format!(
                "tau must lie in (0, 1), got {}",
                self.tau
            )));
        }
        if !(self.format_weight.is_finite() && self.format_weight >= 0.0) {
            return Err(Error::invalid(format!(
                "format weight must be non-negative, got {}",
                self.format_weight
            )));
        }
        Ok(())
    }
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            tau: 0.6,
            format_weight: 1.0,
            embedder: Arc::new(HashedBagEmbedder::default()),
        }
    }
}

impl fmt::Debug for RewardConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RewardConfig")
            .field("tau", &self.tau)
            .field("format_weight", &self.format_weight)
            .finish_non_exhaustive()
    }
}

/// Lowercases, trims, and strips trailing punctuation. Idempotent.
pub fn canonicalize(text: &str) -> String {
    text.trim()
        .to_lowercase()
        .trim_end_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace())
        .to_string()
}

/// The answer segment of a completion: everything after the last closing
/// think tag, trimmed. Completions without tags are answers in full.
pub fn extract_answer(completion: &str) -> &str {
    match completion.rfind(THINK_CLOSE) {
        Some(idx) => completion[idx + THINK_CLOSE.len()..].trim(),
        None => completion.trim(),
    }
}

/// 1 when the completion holds exactly one think span with non-empty inner
/// content, followed by non-empty answer text; 0 otherwise.
pub fn format_reward(completion: &str) -> f64 {
    if completion.matches(THINK_OPEN).count() != 1
        || completion.matches(THINK_CLOSE).count() != 1
    {
        return 0.0;
    }
    let open = completion.find(THINK_OPEN).expect("counted above");
    let close = completion.find(THINK_CLOSE).expect("counted above");
    if close < open {
        return 0.0;
    }
    let inner = &completion[open + THINK_OPEN.len()..close];
    let answer = &completion[close + THINK_CLOSE.len()..];
    if inner.trim().is_empty() || answer.trim().is_empty() {
        return 0.0;
    }
    1.0
}

/// Scores an extracted answer against the ground truth. Exact match after
/// canonicalization for yes/no and multiple choice; thresholded embedding
/// similarity for open-ended answers. Empty predictions score 0.
pub fn accuracy_reward(prediction: &str, answer: &AnswerSpec, cfg: &RewardConfig) -> f64 {
    let pred = canonicalize(prediction);
    if pred.is_empty() {
        return 0.0;
    }
    match answer.kind {
        AnswerKind::YesNo => exact_match(&pred, &answer.ground_truth),
        AnswerKind::MultipleChoice => {
            match (option_letter(&pred), option_letter(&answer.ground_truth)) {
                (Some(a), Some(b)) => {
                    if a == b {
                        1.0
                    } else {
                        0.0
                    }
                }
                _ => exact_match(&pred, &answer.ground_truth),
            }
        }
        AnswerKind::OpenEnded => {
            let a = cfg.embedder.embed(&pred);
            let b = cfg.embedder.embed(&answer.ground_truth);
            let s = cosine(&a, &b).min(1.0);
            if s >= cfg.tau {
                s
            } else {
                0.0
            }
        }
    }
}

/// Semantic reward of a full completion:
/// `accuracy(extracted answer) + format_weight * format(completion)`.
pub fn semantic_reward(completion: &str, answer: &AnswerSpec, cfg: &RewardConfig) -> f64 {
    accuracy_reward(extract_answer(completion), answer, cfg)
        + cfg.format_weight * format_reward(completion)
}

fn exact_match(a: &str, b: &str) -> f64 {
    if a == b {
        1.0
    } else {
        0.0
    }
}

/// Leading option letter of a canonical answer, recognized only when the
/// letter stands alone or is followed by a separator, as in "b) cat".
fn option_letter(canon: &str) -> Option<char> {
    let mut chars = canon.chars();
    let first = chars.next()?;
    if !first.is_ascii_alphabetic() {
        return None;
    }
    match chars.next() {
        None => Some(first),
        Some(')' | '.' | ':' | '-' | ' ') => Some(first),
        Some(_) => None,
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na * nb)
}
