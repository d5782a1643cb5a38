//! Two-group engagement report.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::acoustic::{analyze_signal, baseline_normalize, AcousticError, Framing};
use super::coding::{aggregate_behavior, BehaviorType};
use super::dataset::Dataset;
use super::discourse::{discourse_metrics, per_student_metrics, CognitiveLevel, DiscourseMetrics, SpeakerKind};
use super::sentiment::{SentimentError, SentimentProvider};
use super::stats::{mann_whitney_u, mean, median, t_test, StatsError, TTestVariant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Video,
    Audio,
    Transcript,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    MannWhitney,
    TTest,
    /// Class-level value reported without a test.
    Descriptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ManifestRow {
    pub variable: &'static str,
    pub family: Family,
    pub test: TestKind,
}

const fn row(variable: &'static str, family: Family, test: TestKind) -> ManifestRow {
    ManifestRow { variable, family, test }
}

use Family::{Audio as A, Transcript as T, Video as V};
use TestKind::{Descriptive as D, MannWhitney as U, TTest as Tt};

/// Every row a report contains, in order.
pub const MANIFEST: [ManifestRow; 28] = [
    row("close_posture", V, U),
    row("neutral_posture", V, Tt),
    row("leave_posture", V, U),
    row("positive_behavior", V, U),
    row("normal_behavior", V, U),
    row("misbehavior", V, U),
    row("high_arousal_positive", V, U),
    row("high_arousal_negative", V, U),
    row("low_arousal_positive", V, U),
    row("low_arousal_negative", V, U),
    row("loudness", A, Tt),
    row("frequency", A, Tt),
    row("speaking_turns_per_min", T, D),
    row("mean_sentence_length", T, Tt),
    row("mean_speaking_turn_length", T, Tt),
    row("student_speaking_times_per_min", T, Tt),
    row("words_per_student_per_min", T, Tt),
    row("sentences_per_student_per_min", T, Tt),
    row("assertions_per_min", T, U),
    row("questions_per_min", T, U),
    row("exclamations_per_min", T, U),
    row("remembering_per_min", T, U),
    row("understanding_per_min", T, U),
    row("applying_per_min", T, U),
    row("analyzing_per_min", T, U),
    row("evaluation_per_min", T, U),
    row("creation_per_min", T, U),
    row("positive_emotion", T, Tt),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Ok,
    /// Input for this row was not supplied.
    Absent,
    /// Test undefined (no variation or too few values); see `note`.
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "a>b")]
    AGreater,
    #[serde(rename = "a<b")]
    BGreater,
    #[serde(rename = "none")]
    None,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::AGreater => "a>b",
            Direction::BGreater => "a<b",
            Direction::None => "none",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SummaryKind {
    Mean,
    Median,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub variable: String,
    pub family: Family,
    pub test: TestKind,
    pub status: RowStatus,
    pub summary: SummaryKind,
    pub summary_a: Option<f64>,
    pub summary_b: Option<f64>,
    pub n_a: usize,
    pub n_b: usize,
    /// U for group a, or t.
    pub statistic: Option<f64>,
    pub df: Option<f64>,
    pub p_value: Option<f64>,
    /// Rank-biserial r for U rows, Cohen's d for t rows.
    pub effect_size: Option<f64>,
    pub direction: Direction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl ReportRow {
    pub fn significant(&self, alpha: f64) -> bool {
        self.p_value.is_some_and(|p| p < alpha)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub group_a: String,
    pub group_b: String,
    pub t_variant: TTestVariant,
    pub rows: Vec<ReportRow>,
}

impl Report {
    pub fn row(&self, variable: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.variable == variable)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReportOptions {
    pub t_variant: TTestVariant,
    pub framing: Framing,
    /// Divide each group's acoustic series by its own leading-fraction mean.
    /// Off by default: it cancels a uniform level difference between groups.
    pub baseline_fraction: Option<f64>,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions { t_variant: TTestVariant::Welch, framing: Framing::default(), baseline_fraction: None }
    }
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("missing inputs: {}", .0.join(", "))]
    MissingVariable(Vec<String>),
    #[error(transparent)]
    Sentiment(#[from] SentimentError),
    #[error("audio of group {group}: {source}")]
    Acoustic { group: &'static str, source: AcousticError },
}

/// Per-group input values for every manifest row.
#[derive(Debug, Clone, Default)]
struct GroupValues {
    /// Absent means the row's input is missing.
    values: BTreeMap<&'static str, Vec<f64>>,
}

fn behavior_values(ds: &Dataset, out: &mut GroupValues) {
    let events = ds.behavior.as_deref().unwrap_or_default();
    let durations = aggregate_behavior(events, &ds.windows());
    for kind in BehaviorType::ALL {
        let vals = ds
            .manifest
            .students
            .iter()
            .map(|s| durations.get(s).map_or(0.0, |d| d[&kind]))
            .collect();
        out.values.insert(kind.name(), vals);
    }
}

fn acoustic_values(
    ds: &Dataset,
    group: &'static str,
    opts: &ReportOptions,
    out: &mut GroupValues,
) -> Result<(), ReportError> {
    let Some(audio) = &ds.audio else { return Ok(()) };
    let err = |source| ReportError::Acoustic { group, source };
    let frames = analyze_signal(&audio.samples, audio.sample_rate, &opts.framing).map_err(err)?;
    let mut energy: Vec<f64> = frames.iter().map(|f| f.energy).collect();
    let mut zcr: Vec<f64> = frames.iter().map(|f| f.zcr).collect();
    if let Some(fraction) = opts.baseline_fraction {
        energy = baseline_normalize(&energy, fraction).map_err(err)?;
        zcr = baseline_normalize(&zcr, fraction).map_err(err)?;
    }
    out.values.insert("loudness", energy);
    out.values.insert("frequency", zcr);
    Ok(())
}

fn transcript_values(
    ds: &Dataset,
    provider: &dyn SentimentProvider,
    out: &mut GroupValues,
) -> Result<f64, ReportError> {
    let transcript = ds.transcript.as_deref().unwrap_or_default();
    let duration = ds.manifest.duration_min;
    let per = per_student_metrics(transcript, duration);
    let zero = discourse_metrics(&[], duration);
    let all: Vec<&DiscourseMetrics> =
        ds.manifest.students.iter().map(|s| per.get(s).unwrap_or(&zero)).collect();
    // Length metrics only exist for students who spoke.
    let speakers: Vec<&DiscourseMetrics> =
        ds.manifest.students.iter().filter_map(|s| per.get(s)).collect();

    let pick = |set: &[&DiscourseMetrics], f: fn(&DiscourseMetrics) -> f64| set.iter().map(|m| f(m)).collect();
    out.values.insert("mean_sentence_length", pick(&speakers, |m| m.mean_sentence_length));
    out.values.insert("mean_speaking_turn_length", pick(&speakers, |m| m.mean_speaking_turn_length));
    out.values.insert("student_speaking_times_per_min", pick(&all, |m| m.student_speaking_times_per_min));
    out.values.insert("words_per_student_per_min", pick(&all, |m| m.words_per_student_per_min));
    out.values.insert("sentences_per_student_per_min", pick(&all, |m| m.sentences_per_student_per_min));
    out.values.insert("assertions_per_min", pick(&all, |m| m.assertions_per_min));
    out.values.insert("questions_per_min", pick(&all, |m| m.questions_per_min));
    out.values.insert("exclamations_per_min", pick(&all, |m| m.exclamations_per_min));
    for (level, name) in CognitiveLevel::ALL.iter().zip([
        "remembering_per_min",
        "understanding_per_min",
        "applying_per_min",
        "analyzing_per_min",
        "evaluation_per_min",
        "creation_per_min",
    ]) {
        out.values.insert(name, all.iter().map(|m| m.bloom_per_min[level]).collect());
    }

    let mut emotion = Vec::new();
    for s in &ds.manifest.students {
        let texts: Vec<&str> = transcript
            .iter()
            .filter(|u| u.speaker == SpeakerKind::Student && u.student_id.as_deref() == Some(s))
            .map(|u| u.text.as_str())
            .collect();
        if texts.is_empty() {
            continue;
        }
        let mut total = 0.0;
        for t in &texts {
            total += provider.positive_score(t)?;
        }
        emotion.push(total / texts.len() as f64);
    }
    out.values.insert("positive_emotion", emotion);
    Ok(discourse_metrics(transcript, duration).speaking_turns_per_min)
}

fn direction(diff: f64) -> Direction {
    if diff > 0.0 {
        Direction::AGreater
    } else if diff < 0.0 {
        Direction::BGreater
    } else {
        Direction::None
    }
}

fn empty_row(m: &ManifestRow, status: RowStatus, summary: SummaryKind) -> ReportRow {
    ReportRow {
        variable: m.variable.to_string(),
        family: m.family,
        test: m.test,
        status,
        summary,
        summary_a: None,
        summary_b: None,
        n_a: 0,
        n_b: 0,
        statistic: None,
        df: None,
        p_value: None,
        effect_size: None,
        direction: Direction::None,
        note: None,
    }
}

fn test_row(m: &ManifestRow, a: &[f64], b: &[f64], variant: TTestVariant) -> ReportRow {
    let summary = if m.test == TestKind::MannWhitney { SummaryKind::Median } else { SummaryKind::Mean };
    let mut r = empty_row(m, RowStatus::Ok, summary);
    r.n_a = a.len();
    r.n_b = b.len();
    let summarize = |xs: &[f64]| {
        (!xs.is_empty()).then(|| if summary == SummaryKind::Median { median(xs) } else { mean(xs) })
    };
    r.summary_a = summarize(a);
    r.summary_b = summarize(b);
    let result = if m.test == TestKind::MannWhitney { mann_whitney_u(a, b) } else { t_test(a, b, variant) };
    match result {
        Ok(res) => {
            r.statistic = Some(res.statistic);
            r.df = res.df;
            r.p_value = Some(res.p_value);
            r.effect_size = Some(res.effect_size);
            r.direction = if m.test == TestKind::MannWhitney {
                // U counts pairs where a exceeds b.
                direction(res.statistic - (a.len() * b.len()) as f64 / 2.0)
            } else {
                direction(res.statistic)
            };
        }
        Err(StatsError::DegenerateSample) => {
            r.status = RowStatus::Degenerate;
            r.statistic = Some((a.len() * b.len()) as f64 / 2.0);
            r.p_value = Some(1.0);
            r.effect_size = Some(0.0);
            r.note = Some("all values identical".into());
        }
        Err(StatsError::ZeroVariance) => {
            r.status = RowStatus::Degenerate;
            let diff = mean(a) - mean(b);
            if diff == 0.0 {
                r.statistic = Some(0.0);
                r.p_value = Some(1.0);
                r.effect_size = Some(0.0);
            }
            r.direction = direction(diff);
            r.note = Some("zero variance in both groups".into());
        }
        Err(e) => {
            r.status = RowStatus::Degenerate;
            r.note = Some(e.to_string());
        }
    }
    r
}

fn missing_inputs(a: &Dataset, b: &Dataset) -> Vec<String> {
    let mut missing = Vec::new();
    for (group, ds) in [("group_a", a), ("group_b", b)] {
        if ds.behavior.is_none() {
            missing.push(format!("{group}: behavior"));
        }
        if ds.transcript.is_none() {
            missing.push(format!("{group}: transcript"));
        }
    }
    missing
}

/// Compares group `a` against group `b` on every manifest variable.
///
/// Behavior and transcript inputs are required; rows fed by audio are marked
/// absent when either group lacks it.
pub fn build_report(
    a: &Dataset,
    b: &Dataset,
    opts: &ReportOptions,
    provider: &dyn SentimentProvider,
) -> Result<Report, ReportError> {
    let missing = missing_inputs(a, b);
    if !missing.is_empty() {
        return Err(ReportError::MissingVariable(missing));
    }
    let (mut va, mut vb) = (GroupValues::default(), GroupValues::default());
    behavior_values(a, &mut va);
    behavior_values(b, &mut vb);
    acoustic_values(a, "a", opts, &mut va)?;
    acoustic_values(b, "b", opts, &mut vb)?;
    let turns_a = transcript_values(a, provider, &mut va)?;
    let turns_b = transcript_values(b, provider, &mut vb)?;

    let rows = MANIFEST
        .iter()
        .map(|m| {
            if m.test == TestKind::Descriptive {
                let mut r = empty_row(m, RowStatus::Ok, SummaryKind::Mean);
                r.summary_a = Some(turns_a);
                r.summary_b = Some(turns_b);
                r.n_a = 1;
                r.n_b = 1;
                r.direction = direction(turns_a - turns_b);
                return r;
            }
            match (va.values.get(m.variable), vb.values.get(m.variable)) {
                (Some(x), Some(y)) => test_row(m, x, y, opts.t_variant),
                _ => {
                    let mut r = empty_row(m, RowStatus::Absent, SummaryKind::Mean);
                    r.note = Some("no audio".into());
                    r
                }
            }
        })
        .collect();
    Ok(Report { group_a: a.manifest.name.clone(), group_b: b.manifest.name.clone(), t_variant: opts.t_variant, rows })
}

fn num(x: Option<f64>, prec: usize) -> String {
    match x {
        Some(v) if v != 0.0 && (v.abs() < 1e-3 || v.abs() >= 1e5) => format!("{v:.*e}", prec.min(3)),
        Some(v) => format!("{v:.prec$}"),
        None => "-".into(),
    }
}

/// Aligned plain-text table.
pub fn render_text(report: &Report) -> String {
    let header = ["variable", "family", "test", "A", "B", "stat", "df", "p", "effect", "dir", "status"];
    let cells: Vec<[String; 11]> = report
        .rows
        .iter()
        .map(|r| {
            let test = match r.test {
                TestKind::MannWhitney => "U",
                TestKind::TTest => "t",
                TestKind::Descriptive => "-",
            };
            let family = match r.family {
                Family::Video => "video",
                Family::Audio => "audio",
                Family::Transcript => "transcript",
            };
            let kind = if r.summary == SummaryKind::Median { "Mdn" } else { "M" };
            let status = match r.status {
                RowStatus::Ok => "ok",
                RowStatus::Absent => "absent",
                RowStatus::Degenerate => "degenerate",
            };
            let summary = |x: Option<f64>| if x.is_none() { "-".to_string() } else { format!("{kind} {}", num(x, 3)) };
            [
                r.variable.clone(),
                family.into(),
                test.into(),
                summary(r.summary_a),
                summary(r.summary_b),
                num(r.statistic, 3),
                num(r.df, 1),
                num(r.p_value, 4),
                num(r.effect_size, 3),
                r.direction.as_str().into(),
                status.into(),
            ]
        })
        .collect();
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let _ = writeln!(out, "group A: {}", report.group_a);
    let _ = writeln!(out, "group B: {}", report.group_b);
    let line = |out: &mut String, row: &[&str]| {
        let mut s = String::new();
        for (i, (c, w)) in row.iter().zip(&widths).enumerate() {
            if i == 0 {
                let _ = write!(s, "{c:<w$}");
            } else {
                let _ = write!(s, "  {c:>w$}");
            }
        }
        out.push_str(s.trim_end());
        out.push('\n');
    };
    line(&mut out, &header);
    for row in &cells {
        let refs: Vec<&str> = row.iter().map(String::as_str).collect();
        line(&mut out, &refs);
    }
    out
}
