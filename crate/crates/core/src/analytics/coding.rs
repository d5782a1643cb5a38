//! Manual behavior coding of video clips and clip-window sampling.
//!
//! All times are handled in whole deciseconds internally; coded events are
//! required to sit on the 0.1 s grid.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Posture,
    Behavior,
    Affective,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BehaviorType {
    ClosePosture,
    NeutralPosture,
    LeavePosture,
    PositiveBehavior,
    NormalBehavior,
    Misbehavior,
    HighArousalPositive,
    HighArousalNegative,
    LowArousalPositive,
    LowArousalNegative,
}

impl BehaviorType {
    pub const ALL: [BehaviorType; 10] = [
        BehaviorType::ClosePosture,
        BehaviorType::NeutralPosture,
        BehaviorType::LeavePosture,
        BehaviorType::PositiveBehavior,
        BehaviorType::NormalBehavior,
        BehaviorType::Misbehavior,
        BehaviorType::HighArousalPositive,
        BehaviorType::HighArousalNegative,
        BehaviorType::LowArousalPositive,
        BehaviorType::LowArousalNegative,
    ];

    pub fn category(self) -> Category {
        use BehaviorType::*;
        match self {
            ClosePosture | NeutralPosture | LeavePosture => Category::Posture,
            PositiveBehavior | NormalBehavior | Misbehavior => Category::Behavior,
            HighArousalPositive | HighArousalNegative | LowArousalPositive | LowArousalNegative => Category::Affective,
        }
    }

    pub fn name(self) -> &'static str {
        use BehaviorType::*;
        match self {
            ClosePosture => "close_posture",
            NeutralPosture => "neutral_posture",
            LeavePosture => "leave_posture",
            PositiveBehavior => "positive_behavior",
            NormalBehavior => "normal_behavior",
            Misbehavior => "misbehavior",
            HighArousalPositive => "high_arousal_positive",
            HighArousalNegative => "high_arousal_negative",
            LowArousalPositive => "low_arousal_positive",
            LowArousalNegative => "low_arousal_negative",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorEvent {
    pub student_id: String,
    pub category: Category,
    #[serde(rename = "type")]
    pub kind: BehaviorType,
    pub start_s: f64,
    pub end_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub start_s: f64,
    pub end_s: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodingError {
    #[error("cannot place {n} windows of {w} s in a {clip} s clip")]
    Infeasible { clip: f64, n: usize, w: f64 },
    #[error("window length must be positive and on the 0.1 s grid")]
    BadWindow,
    #[error("event {index}: {reason}")]
    InvalidEvent { index: usize, reason: String },
    #[error("events {first} and {second} overlap within category {category:?} for student {student}")]
    Overlap { student: String, category: Category, first: usize, second: usize },
}

/// Converts seconds to deciseconds if `s` lies on the 0.1 s grid.
pub fn to_ds(s: f64) -> Option<i64> {
    let ds = (s * 10.0).round();
    ((s * 10.0 - ds).abs() < 1e-6 && ds.is_finite()).then_some(ds as i64)
}

fn ds_to_s(ds: i64) -> f64 {
    ds as f64 / 10.0
}

/// Draws `n` disjoint `[start, start + w)` windows from a clip, uniformly over
/// all placements with starts on the 0.1 s grid, sorted ascending.
///
/// Placements of `n` disjoint windows correspond one-to-one with choices of
/// `n` distinct values from `0..slack + n` (the gaps before each window), so a
/// uniform index sample gives a uniform placement without retries.
pub fn sample_windows(clip_len_s: f64, n: usize, w: f64, seed: u64) -> Result<Vec<Window>, CodingError> {
    let w_ds = to_ds(w).filter(|&d| d > 0).ok_or(CodingError::BadWindow)?;
    let clip_ds = (clip_len_s * 10.0 + 1e-6).floor() as i64;
    let needed = w_ds * n as i64;
    if !clip_len_s.is_finite() || needed > clip_ds {
        return Err(CodingError::Infeasible { clip: clip_len_s, n, w });
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let slack = (clip_ds - needed) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks = rand::seq::index::sample(&mut rng, slack + n, n).into_vec();
    picks.sort_unstable();
    Ok(picks
        .into_iter()
        .enumerate()
        .map(|(i, p)| {
            let start = (p - i) as i64 + i as i64 * w_ds;
            Window { start_s: ds_to_s(start), end_s: ds_to_s(start + w_ds) }
        })
        .collect())
}

/// Checks grid alignment, ordering and within-category exclusivity.
pub fn validate_events(events: &[BehaviorEvent]) -> Result<(), CodingError> {
    let mut spans: BTreeMap<(&str, Category), Vec<(i64, i64, usize)>> = BTreeMap::new();
    for (index, e) in events.iter().enumerate() {
        let bad = |reason: &str| CodingError::InvalidEvent { index, reason: reason.into() };
        if e.kind.category() != e.category {
            return Err(bad("type does not belong to category"));
        }
        let (Some(s), Some(t)) = (to_ds(e.start_s), to_ds(e.end_s)) else {
            return Err(bad("times must be multiples of 0.1 s"));
        };
        if t <= s {
            return Err(bad("end_s must be greater than start_s"));
        }
        spans.entry((&e.student_id, e.category)).or_default().push((s, t, index));
    }
    for ((student, category), mut v) in spans {
        v.sort_unstable();
        for pair in v.windows(2) {
            if pair[1].0 < pair[0].1 {
                return Err(CodingError::Overlap {
                    student: student.to_string(),
                    category,
                    first: pair[0].2,
                    second: pair[1].2,
                });
            }
        }
    }
    Ok(())
}

pub type Durations = BTreeMap<String, BTreeMap<BehaviorType, f64>>;

/// Total time each student spends in each behavior type inside `windows`,
/// in seconds on the 0.1 s grid. Every type is present for every student
/// that has at least one event.
pub fn aggregate_behavior(events: &[BehaviorEvent], windows: &[Window]) -> Durations {
    let win: Vec<(i64, i64)> = windows
        .iter()
        .map(|w| ((w.start_s * 10.0).round() as i64, (w.end_s * 10.0).round() as i64))
        .collect();
    let mut ds: BTreeMap<String, BTreeMap<BehaviorType, i64>> = BTreeMap::new();
    for e in events {
        let (s, t) = ((e.start_s * 10.0).round() as i64, (e.end_s * 10.0).round() as i64);
        let total: i64 = win.iter().map(|&(a, b)| (t.min(b) - s.max(a)).max(0)).sum();
        let per = ds
            .entry(e.student_id.clone())
            .or_insert_with(|| BehaviorType::ALL.iter().map(|&k| (k, 0)).collect());
        *per.get_mut(&e.kind).expect("all types present") += total;
    }
    ds.into_iter()
        .map(|(id, per)| (id, per.into_iter().map(|(k, v)| (k, ds_to_s(v))).collect()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(kind: BehaviorType, s: f64, e: f64) -> BehaviorEvent {
        BehaviorEvent { student_id: "s1".into(), category: kind.category(), kind, start_s: s, end_s: e }
    }

    #[test]
    fn forced_single_window() {
        let w = sample_windows(10.0, 1, 10.0, 3).unwrap();
        assert_eq!(w, vec![Window { start_s: 0.0, end_s: 10.0 }]);
        assert!(matches!(sample_windows(25.0, 3, 10.0, 0), Err(CodingError::Infeasible { .. })));
    }

    #[test]
    fn windows_are_disjoint_and_seeded() {
        for seed in 0..200 {
            let w = sample_windows(120.0, 3, 10.0, seed).unwrap();
            assert_eq!(w, sample_windows(120.0, 3, 10.0, seed).unwrap());
            // Brute scan on the decisecond grid: no instant is covered twice.
            let mut covered = vec![0u8; 1200];
            for win in &w {
                assert!(win.start_s >= 0.0 && win.end_s <= 120.0);
                for t in to_ds(win.start_s).unwrap()..to_ds(win.end_s).unwrap() {
                    covered[t as usize] += 1;
                }
            }
            assert!(covered.iter().all(|&c| c <= 1));
            assert!(w.windows(2).all(|p| p[0].start_s < p[1].start_s));
        }
    }

    #[test]
    fn window_placement_is_uniform() {
        // Clip 3 s, two 1 s windows: slack 10 ds, C(12, 2) = 66 placements.
        let mut counts: BTreeMap<(i64, i64), usize> = BTreeMap::new();
        let trials = 66 * 300;
        for seed in 0..trials {
            let w = sample_windows(3.0, 2, 1.0, seed as u64).unwrap();
            *counts.entry((to_ds(w[0].start_s).unwrap(), to_ds(w[1].start_s).unwrap())).or_default() += 1;
        }
        assert_eq!(counts.len(), 66);
        // Chi-square with 65 df; 99.9% quantile is about 107.
        let expected = 300.0;
        let chi2: f64 = counts.values().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        assert!(chi2 < 107.0, "chi2 = {chi2}");
    }

    #[test]
    fn aggregation_examples() {
        let win = [Window { start_s: 10.0, end_s: 20.0 }];
        assert!(aggregate_behavior(&[], &win).is_empty());
        let full = aggregate_behavior(&[ev(BehaviorType::ClosePosture, 10.0, 20.0)], &win);
        assert_eq!(full["s1"][&BehaviorType::ClosePosture], 10.0);
        assert_eq!(full["s1"][&BehaviorType::Misbehavior], 0.0);
        let part = aggregate_behavior(&[ev(BehaviorType::ClosePosture, 5.0, 15.0)], &win);
        assert_eq!(part["s1"][&BehaviorType::ClosePosture], 5.0);
    }

    #[test]
    fn validation() {
        assert!(validate_events(&[ev(BehaviorType::ClosePosture, 0.0, 1.0), ev(BehaviorType::Misbehavior, 0.5, 2.0)]).is_ok());
        assert!(matches!(
            validate_events(&[ev(BehaviorType::ClosePosture, 0.0, 1.0), ev(BehaviorType::LeavePosture, 0.5, 2.0)]),
            Err(CodingError::Overlap { .. })
        ));
        assert!(matches!(validate_events(&[ev(BehaviorType::ClosePosture, 0.05, 1.0)]), Err(CodingError::InvalidEvent { .. })));
        assert!(matches!(validate_events(&[ev(BehaviorType::ClosePosture, 2.0, 1.0)]), Err(CodingError::InvalidEvent { .. })));
    }
}
