//! Seeded two-group datasets with optional injected effects.
//!
//! Group B is drawn first; group A is a copy of B (with its own student ids)
//! plus the injected differences. Every variable that is not injected is
//! therefore identical across groups, and only the injected rows can differ.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use super::coding::{sample_windows, BehaviorEvent, BehaviorType, CodingError, Window};
use super::dataset::{save_dataset, Audio, Dataset, DatasetError, DatasetManifest, GROUP_A_DIR, GROUP_B_DIR};
use super::discourse::{CognitiveLevel, SpeakerKind, SpeechType, Utterance};

pub const AUDIO_FILE: &str = "audio.wav";

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticParams {
    pub seed: u64,
    pub students: usize,
    pub duration_min: f64,
    pub windows: usize,
    pub window_s: f64,
    /// Extra close-posture seconds per student in group A, spread over the windows.
    pub close_shift_s: f64,
    /// Energy ratio of group A's audio to group B's.
    pub loudness_factor: f64,
    pub with_audio: bool,
    pub audio_s: f64,
    pub sample_rate: u32,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        SyntheticParams {
            seed: 7,
            students: 18,
            duration_min: 45.0,
            windows: 9,
            window_s: 10.0,
            close_shift_s: 30.0,
            loudness_factor: 1.5,
            with_audio: true,
            audio_s: 20.0,
            sample_rate: 16_000,
        }
    }
}

impl SyntheticParams {
    /// Same construction without injected effects.
    pub fn null() -> Self {
        SyntheticParams { close_shift_s: 0.0, loudness_factor: 1.0, ..Default::default() }
    }
}

#[derive(Debug, Error)]
pub enum SyntheticError {
    #[error(transparent)]
    Windows(#[from] CodingError),
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

#[derive(Debug, Clone)]
pub struct SyntheticPair {
    pub a: Dataset,
    pub b: Dataset,
    pub audio_a: Option<Vec<i16>>,
    pub audio_b: Option<Vec<i16>>,
    pub sample_rate: u32,
}

// Posture ranges in deciseconds; the remaining window time absorbs the shift.
const CLOSE_DS: (i64, i64) = (5, 15);
const NEUTRAL_DS: (i64, i64) = (25, 39);
const LEAVE_DS: (i64, i64) = (3, 12);
const BEHAVIOR_DS: [(BehaviorType, (i64, i64)); 3] = [
    (BehaviorType::PositiveBehavior, (10, 35)),
    (BehaviorType::NormalBehavior, (30, 50)),
    (BehaviorType::Misbehavior, (1, 10)),
];
const AFFECT_DS: [(BehaviorType, (i64, i64)); 4] = [
    (BehaviorType::HighArousalPositive, (2, 20)),
    (BehaviorType::HighArousalNegative, (2, 20)),
    (BehaviorType::LowArousalPositive, (2, 20)),
    (BehaviorType::LowArousalNegative, (2, 20)),
];

fn ds(x: i64) -> f64 {
    x as f64 / 10.0
}

/// Splits `total` into `n` near-equal parts, larger parts last.
fn spread(total: i64, n: usize) -> Vec<i64> {
    let n = n as i64;
    (0..n).map(|i| total / n + i64::from(i >= n - total % n)).collect()
}

/// Draws the posture, behavior and affect durations of one student in one window.
#[derive(Debug, Clone)]
struct WindowDraw {
    close: i64,
    neutral: i64,
    leave: i64,
    behavior: Vec<(BehaviorType, i64)>,
    affect: Vec<(BehaviorType, i64)>,
}

fn draw_window(rng: &mut ChaCha8Rng) -> WindowDraw {
    let mut range = |(lo, hi): (i64, i64)| rng.random_range(lo..=hi);
    WindowDraw {
        close: range(CLOSE_DS),
        neutral: range(NEUTRAL_DS),
        leave: range(LEAVE_DS),
        behavior: BEHAVIOR_DS.iter().map(|&(k, r)| (k, range(r))).collect(),
        affect: AFFECT_DS.iter().map(|&(k, r)| (k, range(r))).collect(),
    }
}

/// Lays out one category's spans back to back from the window start.
fn lay_out(student: &str, start_ds: i64, spans: &[(BehaviorType, i64)], out: &mut Vec<BehaviorEvent>) {
    let mut t = start_ds;
    for &(kind, len) in spans {
        if len > 0 {
            out.push(BehaviorEvent {
                student_id: student.to_string(),
                category: kind.category(),
                kind,
                start_s: ds(t),
                end_s: ds(t + len),
            });
        }
        t += len;
    }
}

fn events_for(student: &str, windows: &[Window], draws: &[WindowDraw], extra_close: &[i64]) -> Vec<BehaviorEvent> {
    let mut out = Vec::new();
    for ((w, d), &extra) in windows.iter().zip(draws).zip(extra_close) {
        let start = (w.start_s * 10.0).round() as i64;
        let posture = [
            (BehaviorType::ClosePosture, d.close + extra),
            (BehaviorType::NeutralPosture, d.neutral),
            (BehaviorType::LeavePosture, d.leave),
        ];
        lay_out(student, start, &posture, &mut out);
        lay_out(student, start, &d.behavior, &mut out);
        lay_out(student, start, &d.affect, &mut out);
    }
    out
}

const SUBJECTS: &[&str] = &["the planet", "Mars", "this orbit", "the moon", "our sun", "that comet", "the model", "gravity"];
const PREDICATES: &[&str] = &[
    "moves around the sun",
    "is very hot",
    "looks red from here",
    "has a thin atmosphere",
    "is really interesting",
    "pulls everything closer",
    "is hard to picture",
    "seems bigger than before",
];
const TEACHER_LINES: &[(&str, SpeechType)] = &[
    ("Look at the model on the board.", SpeechType::Lecturing),
    ("The planets orbit the sun at different speeds.", SpeechType::Lecturing),
    ("Please turn to your partner and discuss.", SpeechType::Directing),
    ("Which planet is closest to the sun?", SpeechType::CloseQuestion),
    ("Why do you think the seasons change?", SpeechType::OpenQuestion),
];

fn student_text(rng: &mut ChaCha8Rng, kind: SpeechType) -> String {
    let sentences = rng.random_range(1..=3);
    let mut parts = Vec::new();
    for _ in 0..sentences {
        let s = SUBJECTS[rng.random_range(0..SUBJECTS.len())];
        let p = PREDICATES[rng.random_range(0..PREDICATES.len())];
        let mut first = s.to_string();
        first[..1].make_ascii_uppercase();
        parts.push(match kind {
            SpeechType::Question => format!("Why {s} {p}?"),
            SpeechType::Exclamation => format!("{first} {p}!"),
            _ => format!("{first} {p}."),
        });
    }
    parts.join(" ")
}

fn transcript_for(rng: &mut ChaCha8Rng, students: &[String], duration_s: f64) -> Vec<(Option<usize>, Utterance)> {
    let mut out = Vec::new();
    let mut t = 0.0;
    let mut i = 0;
    while t < duration_s {
        let (text, kind) = TEACHER_LINES[i % TEACHER_LINES.len()];
        out.push((
            None,
            Utterance {
                speaker: SpeakerKind::Teacher,
                student_id: None,
                text: text.into(),
                start_s: t,
                speech_type: kind,
                cognitive_level: None,
            },
        ));
        t += 60.0;
        i += 1;
    }
    for (idx, _) in students.iter().enumerate() {
        let count = rng.random_range(2..=6);
        for _ in 0..count {
            let kind = [SpeechType::Assertion, SpeechType::Question, SpeechType::Exclamation][rng.random_range(0..3)];
            let level = rng
                .random_bool(0.6)
                .then(|| CognitiveLevel::ALL[rng.random_range(0..CognitiveLevel::ALL.len())]);
            // Tenth-of-a-second offsets keep utterances from colliding with teacher lines.
            let start_s = rng.random_range(0..(duration_s as i64 * 10)) as f64 / 10.0 + 0.05;
            out.push((
                Some(idx),
                Utterance {
                    speaker: SpeakerKind::Student,
                    student_id: None,
                    text: student_text(rng, kind),
                    start_s,
                    speech_type: kind,
                    cognitive_level: level,
                },
            ));
        }
    }
    out.sort_by(|a, b| a.1.start_s.total_cmp(&b.1.start_s));
    out
}

fn base_audio(rng: &mut ChaCha8Rng, samples: usize, sample_rate: u32) -> Vec<i16> {
    let noise = Normal::new(0.0, 0.05).expect("valid sigma");
    let sr = f64::from(sample_rate);
    (0..samples)
        .map(|i| {
            let t = i as f64 / sr;
            let x = 0.15 * (std::f64::consts::TAU * 220.0 * t).sin()
                + 0.05 * (std::f64::consts::TAU * 660.0 * t).sin()
                + noise.sample(rng);
            (x.clamp(-0.5, 0.5) * 32767.0).round() as i16
        })
        .collect()
}

fn scale_audio(samples: &[i16], energy_factor: f64) -> Vec<i16> {
    let g = energy_factor.sqrt();
    samples
        .iter()
        .map(|&s| (f64::from(s) * g).round().clamp(f64::from(i16::MIN), f64::from(i16::MAX)) as i16)
        .collect()
}

fn ids(prefix: char, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i:02}")).collect()
}

pub fn generate(p: &SyntheticParams) -> Result<SyntheticPair, SyntheticError> {
    if p.students == 0 || p.windows == 0 {
        return Err(SyntheticError::Params("students and windows must be positive".into()));
    }
    if !(p.loudness_factor > 0.0) || !(p.close_shift_s >= 0.0) {
        return Err(SyntheticError::Params("loudness_factor must be positive, close_shift_s non-negative".into()));
    }
    let window_ds = (p.window_s * 10.0).round() as i64;
    let headroom = window_ds - CLOSE_DS.1 - NEUTRAL_DS.1 - LEAVE_DS.1;
    let extra = spread((p.close_shift_s * 10.0).round() as i64, p.windows);
    if extra.iter().any(|&e| e > headroom) {
        return Err(SyntheticError::Params(format!(
            "close_shift_s {} does not fit in {} windows of {} s",
            p.close_shift_s, p.windows, p.window_s
        )));
    }
    let duration_s = p.duration_min * 60.0;
    let windows = sample_windows(duration_s, p.windows, p.window_s, p.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed ^ 0x5eed_0f_da7a);

    let (ids_a, ids_b) = (ids('a', p.students), ids('b', p.students));
    let no_extra = vec![0; p.windows];
    let (mut beh_a, mut beh_b) = (Vec::new(), Vec::new());
    for (sa, sb) in ids_a.iter().zip(&ids_b) {
        let draws: Vec<WindowDraw> = (0..p.windows).map(|_| draw_window(&mut rng)).collect();
        beh_b.extend(events_for(sb, &windows, &draws, &no_extra));
        beh_a.extend(events_for(sa, &windows, &draws, &extra));
    }

    let base = transcript_for(&mut rng, &ids_b, duration_s);
    let with_ids = |names: &[String]| -> Vec<Utterance> {
        base.iter()
            .map(|(idx, u)| Utterance { student_id: idx.map(|i| names[i].clone()), ..u.clone() })
            .collect()
    };

    let (audio_a, audio_b) = if p.with_audio {
        let n = (p.audio_s * f64::from(p.sample_rate)).round() as usize;
        let b = base_audio(&mut rng, n, p.sample_rate);
        (Some(scale_audio(&b, p.loudness_factor)), Some(b))
    } else {
        (None, None)
    };
    let to_audio = |s: &Option<Vec<i16>>| s.as_ref().map(|v| Audio::from_pcm16(p.sample_rate, v));

    let manifest = |name: &str, students: Vec<String>| DatasetManifest {
        name: name.into(),
        duration_min: p.duration_min,
        students,
        windows: windows.clone(),
        audio: p.with_audio.then(|| AUDIO_FILE.to_string()),
    };
    let a = Dataset {
        manifest: manifest("synthetic group A", ids_a.clone()),
        behavior: Some(beh_a),
        transcript: Some(with_ids(&ids_a)),
        audio: to_audio(&audio_a),
    };
    let b = Dataset {
        manifest: manifest("synthetic group B", ids_b.clone()),
        behavior: Some(beh_b),
        transcript: Some(with_ids(&ids_b)),
        audio: to_audio(&audio_b),
    };
    Ok(SyntheticPair { a, b, audio_a, audio_b, sample_rate: p.sample_rate })
}

/// Writes `group_a/` and `group_b/` under `dir`.
pub fn write_pair(dir: &Path, pair: &SyntheticPair) -> Result<(), SyntheticError> {
    let sr = pair.sample_rate;
    save_dataset(&dir.join(GROUP_A_DIR), &pair.a, pair.audio_a.as_deref().map(|s| (sr, s)))?;
    save_dataset(&dir.join(GROUP_B_DIR), &pair.b, pair.audio_b.as_deref().map(|s| (sr, s)))?;
    Ok(())
}
