//! Transcript discourse metrics.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeakerKind {
    Teacher,
    Student,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeechType {
    Lecturing,
    Directing,
    CloseQuestion,
    OpenQuestion,
    Assertion,
    Question,
    Exclamation,
}

impl SpeechType {
    pub fn is_teacher_type(self) -> bool {
        matches!(self, SpeechType::Lecturing | SpeechType::Directing | SpeechType::CloseQuestion | SpeechType::OpenQuestion)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CognitiveLevel {
    Remembering,
    Understanding,
    Applying,
    Analyzing,
    Evaluation,
    Creation,
}

impl CognitiveLevel {
    pub const ALL: [CognitiveLevel; 6] = [
        CognitiveLevel::Remembering,
        CognitiveLevel::Understanding,
        CognitiveLevel::Applying,
        CognitiveLevel::Analyzing,
        CognitiveLevel::Evaluation,
        CognitiveLevel::Creation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CognitiveLevel::Remembering => "remembering",
            CognitiveLevel::Understanding => "understanding",
            CognitiveLevel::Applying => "applying",
            CognitiveLevel::Analyzing => "analyzing",
            CognitiveLevel::Evaluation => "evaluation",
            CognitiveLevel::Creation => "creation",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub speaker: SpeakerKind,
    /// Required for student utterances.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub student_id: Option<String>,
    pub text: String,
    pub start_s: f64,
    pub speech_type: SpeechType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cognitive_level: Option<CognitiveLevel>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("utterance {index}: {reason}")]
pub struct InvalidUtterance {
    pub index: usize,
    pub reason: String,
}

pub fn validate_transcript(transcript: &[Utterance]) -> Result<(), InvalidUtterance> {
    for (index, u) in transcript.iter().enumerate() {
        let bad = |reason: &str| Err(InvalidUtterance { index, reason: reason.into() });
        if !u.start_s.is_finite() || u.start_s < 0.0 {
            return bad("start_s must be a non-negative number");
        }
        match u.speaker {
            SpeakerKind::Teacher => {
                if !u.speech_type.is_teacher_type() {
                    return bad("student speech type on a teacher utterance");
                }
                if u.cognitive_level.is_some() {
                    return bad("cognitive_level is only coded on student utterances");
                }
            }
            SpeakerKind::Student => {
                if u.student_id.as_deref().is_none_or(str::is_empty) {
                    return bad("student utterance without student_id");
                }
                if u.speech_type.is_teacher_type() {
                    return bad("teacher speech type on a student utterance");
                }
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DiscourseMetrics {
    /// Maximal runs of one speaker, per minute.
    pub speaking_turns_per_min: f64,
    /// Student utterances per student per minute.
    pub student_speaking_times_per_min: f64,
    pub words_per_student_per_min: f64,
    pub sentences_per_student_per_min: f64,
    /// Words per student sentence.
    pub mean_sentence_length: f64,
    /// Words per student speaking turn.
    pub mean_speaking_turn_length: f64,
    pub assertions_per_min: f64,
    pub questions_per_min: f64,
    pub exclamations_per_min: f64,
    pub bloom_per_min: BTreeMap<CognitiveLevel, f64>,
}

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().filter(|w| w.chars().any(char::is_alphanumeric)).count()
}

/// Sentences are runs of text ending in `.`, `!` or `?` (or the end of the
/// utterance) that contain at least one word.
pub fn sentence_count(text: &str) -> usize {
    text.split(['.', '!', '?']).filter(|s| word_count(s) > 0).count()
}

fn speaker_key(u: &Utterance) -> Option<&str> {
    match u.speaker {
        SpeakerKind::Teacher => None,
        SpeakerKind::Student => Some(u.student_id.as_deref().unwrap_or("")),
    }
}

/// Metrics over a whole transcript lasting `duration_min` minutes. Per-student
/// rates divide by the number of distinct student speakers.
pub fn discourse_metrics(transcript: &[Utterance], duration_min: f64) -> DiscourseMetrics {
    let mut m = DiscourseMetrics {
        bloom_per_min: CognitiveLevel::ALL.iter().map(|&l| (l, 0.0)).collect(),
        ..Default::default()
    };
    if transcript.is_empty() || !(duration_min > 0.0) {
        return m;
    }
    let mut ordered: Vec<&Utterance> = transcript.iter().collect();
    ordered.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));

    // Turns: consecutive utterances by the same speaker merge.
    let mut turns: Vec<(Option<&str>, usize)> = Vec::new();
    for u in &ordered {
        let key = speaker_key(u);
        let words = word_count(&u.text);
        match turns.last_mut() {
            Some((k, w)) if *k == key => *w += words,
            _ => turns.push((key, words)),
        }
    }
    m.speaking_turns_per_min = turns.len() as f64 / duration_min;

    let students: Vec<&&Utterance> = ordered.iter().filter(|u| u.speaker == SpeakerKind::Student).collect();
    let n_students = students.iter().filter_map(|u| u.student_id.as_deref()).collect::<BTreeSet<_>>().len();
    if n_students == 0 {
        return m;
    }
    let per_student_min = n_students as f64 * duration_min;
    let words: usize = students.iter().map(|u| word_count(&u.text)).sum();
    let sentences: usize = students.iter().map(|u| sentence_count(&u.text)).sum();
    m.student_speaking_times_per_min = students.len() as f64 / per_student_min;
    m.words_per_student_per_min = words as f64 / per_student_min;
    m.sentences_per_student_per_min = sentences as f64 / per_student_min;
    m.mean_sentence_length = if sentences == 0 { 0.0 } else { words as f64 / sentences as f64 };
    let student_turns: Vec<usize> = turns.iter().filter(|(k, _)| k.is_some()).map(|(_, w)| *w).collect();
    m.mean_speaking_turn_length = if student_turns.is_empty() {
        0.0
    } else {
        student_turns.iter().sum::<usize>() as f64 / student_turns.len() as f64
    };
    let count = |t: SpeechType| students.iter().filter(|u| u.speech_type == t).count() as f64 / duration_min;
    m.assertions_per_min = count(SpeechType::Assertion);
    m.questions_per_min = count(SpeechType::Question);
    m.exclamations_per_min = count(SpeechType::Exclamation);
    for u in &students {
        if let Some(level) = u.cognitive_level {
            *m.bloom_per_min.get_mut(&level).expect("all levels present") += 1.0 / duration_min;
        }
    }
    m
}

/// The same metrics for each student, computed over that student's
/// utterances interleaved with the teacher's.
pub fn per_student_metrics(transcript: &[Utterance], duration_min: f64) -> BTreeMap<String, DiscourseMetrics> {
    let ids: BTreeSet<&str> = transcript.iter().filter_map(|u| speaker_key(u)).collect();
    ids.into_iter()
        .map(|id| {
            let own: Vec<Utterance> = transcript
                .iter()
                .filter(|u| speaker_key(u).is_none_or(|k| k == id))
                .cloned()
                .collect();
            (id.to_string(), discourse_metrics(&own, duration_min))
        })
        .collect()
}
