//! Token- and step-level confidence scores derived from generator logits.
//!
//! A token's confidence is the largest entry of the vocabulary logit vector
//! at the position where it was sampled. A step's confidence aggregates the
//! token scores, either over every token or over the tokens that look like
//! mathematical notation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfidenceError {
    #[error("logit vector is empty")]
    EmptyLogits,
    #[error("logit at index {index} is not finite ({value})")]
    NonFiniteLogit { index: usize, value: f64 },
    #[error("cannot aggregate an empty token list")]
    EmptyStep,
    #[error("token {index} carries no {metric} value")]
    MissingMetric { index: usize, metric: ConfidenceMetric },
}

/// Where a token's scores came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreSource {
    /// Full vocabulary logit vector.
    RawLogits,
    /// Top-k log-probabilities from a hosted API; `max_logit` holds the
    /// largest log-probability instead of a raw logit.
    LogprobsProxy,
}

/// Scores recorded for one generated token.
///
/// `max_prob` and `entropy` are optional because a logprobs-only backend
/// cannot recover the full distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenObservation {
    pub text: String,
    pub max_logit: f64,
    pub max_prob: Option<f64>,
    /// Shannon entropy in nats, stored raw (not negated).
    pub entropy: Option<f64>,
    pub source: ScoreSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfidenceMetric {
    MaxLogit,
    MaxProb,
    Entropy,
}

impl std::fmt::Display for ConfidenceMetric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.pad(match self {
            ConfidenceMetric::MaxLogit => "max_logit",
            ConfidenceMetric::MaxProb => "max_prob",
            ConfidenceMetric::Entropy => "entropy",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    AllTokensMean,
    MathTokensMean,
}

/// Aggregated confidence of one reasoning step. Higher always means more
/// confident, so the entropy metric is stored negated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepConfidence {
    pub value: f64,
    pub metric: ConfidenceMetric,
    pub aggregation: Aggregation,
    /// Number of tokens the step contains (not the number averaged over).
    pub token_count: usize,
}

/// Scores one token from its full logit vector.
pub fn token_confidence(text: impl Into<String>, logits: &[f64]) -> Result<TokenObservation, ConfidenceError> {
    if logits.is_empty() {
        return Err(ConfidenceError::EmptyLogits);
    }
    if let Some((index, &value)) = logits.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(ConfidenceError::NonFiniteLogit { index, value });
    }

    let max_logit = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // Shifted exponentials: the largest term is exactly 1.
    let shifted: Vec<f64> = logits.iter().map(|z| (z - max_logit).exp()).collect();
    let partition: f64 = shifted.iter().sum();
    let log_partition = partition.ln();

    // H = ln Z - sum p_k (z_k - max), with p_k = shifted_k / Z.
    let weighted: f64 = logits
        .iter()
        .zip(&shifted)
        .map(|(z, e)| e * (z - max_logit))
        .sum();
    let entropy = (log_partition - weighted / partition).max(0.0);

    Ok(TokenObservation {
        text: text.into(),
        max_logit,
        max_prob: Some(1.0 / partition),
        entropy: Some(entropy),
        source: ScoreSource::RawLogits,
    })
}

const MATH_SYMBOLS: &[char] = &[
    '+', '-', '\u{2212}', '*', '/', '=', '<', '>', '^', '_', '(', ')', '[', ']', '{', '}', '%', '!', '|',
    '\u{221a}', '\u{2264}', '\u{2265}', '\u{2260}',
];

/// True when the token contains a decimal digit, a backslash, or an
/// operator/bracket symbol.
pub fn is_math_token(text: &str) -> bool {
    text.chars()
        .any(|c| c.is_ascii_digit() || c == '\\' || MATH_SYMBOLS.contains(&c))
}

fn metric_value(token: &TokenObservation, index: usize, metric: ConfidenceMetric) -> Result<f64, ConfidenceError> {
    let missing = || ConfidenceError::MissingMetric { index, metric };
    match metric {
        ConfidenceMetric::MaxLogit => Ok(token.max_logit),
        ConfidenceMetric::MaxProb => token.max_prob.ok_or_else(missing),
        ConfidenceMetric::Entropy => token.entropy.map(|h| -h).ok_or_else(missing),
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Aggregates token scores into a step confidence.
///
/// `MathTokensMean` falls back to the all-token mean when no token in the
/// step qualifies as math.
pub fn aggregate_step(
    tokens: &[TokenObservation],
    metric: ConfidenceMetric,
    aggregation: Aggregation,
) -> Result<StepConfidence, ConfidenceError> {
    if tokens.is_empty() {
        return Err(ConfidenceError::EmptyStep);
    }
    let values = tokens
        .iter()
        .enumerate()
        .map(|(i, t)| metric_value(t, i, metric))
        .collect::<Result<Vec<_>, _>>()?;

    let all_mean = || mean(values.iter().copied()).expect("non-empty");
    let value = match aggregation {
        Aggregation::AllTokensMean => all_mean(),
        Aggregation::MathTokensMean => mean(
            tokens
                .iter()
                .zip(&values)
                .filter(|(t, _)| is_math_token(&t.text))
                .map(|(_, v)| *v),
        )
        .unwrap_or_else(all_mean),
    };

    Ok(StepConfidence {
        value,
        metric,
        aggregation,
        token_count: tokens.len(),
    })
}
