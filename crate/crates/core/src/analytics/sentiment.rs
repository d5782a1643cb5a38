//! Probability-of-positivity scoring for utterances.

use std::collections::BTreeMap;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SentimentError {
    #[error("sentiment provider unavailable: {0}")]
    ProviderUnavailable(String),
}

pub trait SentimentProvider: Send + Sync {
    /// Score in [0, 1]; 0.5 means no evidence either way.
    fn positive_score(&self, text: &str) -> Result<f64, SentimentError>;
}

/// Signed word lexicon: each matched word contributes its weight in [-1, 1];
/// the score is the mean weight mapped onto [0, 1].
#[derive(Debug, Clone)]
pub struct LexiconProvider {
    weights: BTreeMap<String, f64>,
}

const POSITIVE: &[&str] = &[
    "amazing", "awesome", "beautiful", "best", "brilliant", "clear", "cool", "correct", "easy", "enjoy", "enjoyed",
    "excellent", "excited", "exciting", "fantastic", "fun", "glad", "good", "great", "happy", "helpful", "interesting",
    "like", "love", "nice", "perfect", "right", "understand", "wonderful", "wow", "yes",
];

const NEGATIVE: &[&str] = &[
    "angry", "awful", "bad", "boring", "confused", "confusing", "difficult", "dislike", "hard", "hate", "lost", "no",
    "sad", "scary", "stupid", "terrible", "tired", "ugly", "unclear", "upset", "worse", "worst", "wrong",
];

impl Default for LexiconProvider {
    fn default() -> Self {
        let weights = POSITIVE
            .iter()
            .map(|w| (w.to_string(), 1.0))
            .chain(NEGATIVE.iter().map(|w| (w.to_string(), -1.0)))
            .collect();
        LexiconProvider { weights }
    }
}

impl LexiconProvider {
    pub fn new(weights: BTreeMap<String, f64>) -> LexiconProvider {
        let weights = weights.into_iter().map(|(k, v)| (k.to_lowercase(), v.clamp(-1.0, 1.0))).collect();
        LexiconProvider { weights }
    }

    pub fn score(&self, text: &str) -> f64 {
        let matched: Vec<f64> = words(text).filter_map(|w| self.weights.get(&w).copied()).collect();
        if matched.is_empty() {
            return 0.5;
        }
        let mean = matched.iter().sum::<f64>() / matched.len() as f64;
        (mean + 1.0) / 2.0
    }
}

impl SentimentProvider for LexiconProvider {
    fn positive_score(&self, text: &str) -> Result<f64, SentimentError> {
        Ok(self.score(text))
    }
}

fn words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !(c.is_alphanumeric() || c == '\''))
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
}

/// Convenience wrapper over any provider.
pub fn sentiment(provider: &dyn SentimentProvider, text: &str) -> Result<f64, SentimentError> {
    provider.positive_score(text)
}
