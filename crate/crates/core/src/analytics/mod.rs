//! Engagement analytics: behavior coding, acoustic and discourse features,
//! group statistics and two-group reports.

pub mod acoustic;
pub mod coding;
pub mod dataset;
pub mod discourse;
pub mod report;
pub mod scoring;
pub mod sentiment;
pub mod stats;
pub mod synthetic;

pub use acoustic::{analyze_signal, baseline_normalize, short_time_energy, zero_crossing_rate, AcousticError, AcousticFrame, Framing};
pub use coding::{aggregate_behavior, sample_windows, BehaviorEvent, BehaviorType, Category, CodingError, Window};
pub use dataset::{load_dataset, load_pair, Dataset, DatasetError, DatasetManifest};
pub use discourse::{discourse_metrics, per_student_metrics, CognitiveLevel, DiscourseMetrics, Utterance};
pub use report::{build_report, render_text, Direction, Report, ReportError, ReportOptions, ReportRow, RowStatus, MANIFEST};
pub use scoring::{score_test, AnswerKey, KnowledgeTestResponse, ScoringError};
pub use sentiment::{sentiment, LexiconProvider, SentimentError, SentimentProvider};
pub use stats::{cohen_kappa, mann_whitney_u, mann_whitney_u_with, t_test, PMethod, StatResult, StatsError, TTestVariant};
pub use synthetic::{generate, write_pair, SyntheticPair, SyntheticParams};
