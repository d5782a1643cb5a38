//! Knowledge-test scoring: four single-choice items (1 point each), two
//! multiple-choice items (2 points, all-or-nothing) and six open items rated 0-5.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SINGLE_ITEMS: usize = 4;
pub const MULTI_ITEMS: usize = 2;
pub const OPEN_ITEMS: usize = 6;
pub const MAX_RATING: u8 = 5;
pub const MAX_SCORE: u32 = SINGLE_ITEMS as u32 + 2 * MULTI_ITEMS as u32 + OPEN_ITEMS as u32 * MAX_RATING as u32;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScoringError {
    #[error("open item {index} has rating {value}, expected 0-5")]
    RatingOutOfRange { index: usize, value: u8 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerKey {
    pub single_choice: [String; SINGLE_ITEMS],
    pub multiple_choice: [BTreeSet<String>; MULTI_ITEMS],
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeTestResponse {
    /// `None` for an unanswered item.
    pub single_choice: [Option<String>; SINGLE_ITEMS],
    pub multiple_choice: [BTreeSet<String>; MULTI_ITEMS],
    pub open_ratings: [u8; OPEN_ITEMS],
}

pub fn score_test(resp: &KnowledgeTestResponse, key: &AnswerKey) -> Result<u32, ScoringError> {
    if let Some((index, &value)) = resp.open_ratings.iter().enumerate().find(|(_, r)| **r > MAX_RATING) {
        return Err(ScoringError::RatingOutOfRange { index, value });
    }
    let single = resp
        .single_choice
        .iter()
        .zip(&key.single_choice)
        .filter(|(given, want)| given.as_deref() == Some(want.as_str()))
        .count() as u32;
    let multi = resp.multiple_choice.iter().zip(&key.multiple_choice).filter(|(g, w)| g == w).count() as u32;
    let open: u32 = resp.open_ratings.iter().map(|&r| u32::from(r)).sum();
    Ok(single + 2 * multi + open)
}
