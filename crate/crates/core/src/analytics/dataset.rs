//! On-disk session datasets.
//!
//! A dataset directory holds:
//! - `dataset.json`: name, duration, student ids, coded clip windows and the
//!   audio file name (optional);
//! - `behavior.jsonl`: one [`BehaviorEvent`] per line;
//! - `transcript.jsonl`: one [`Utterance`] per line;
//! - the audio file: 16-bit PCM mono WAV.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::coding::{validate_events, BehaviorEvent, Window};
use super::discourse::{validate_transcript, Utterance};

pub const MANIFEST_FILE: &str = "dataset.json";
pub const BEHAVIOR_FILE: &str = "behavior.jsonl";
pub const TRANSCRIPT_FILE: &str = "transcript.jsonl";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}:{line}: {message}", file.display())]
    Schema { file: PathBuf, line: usize, message: String },
    #[error("{}: {message}", file.display())]
    Audio { file: PathBuf, message: String },
}

impl DatasetError {
    /// Whether the error comes from malformed content rather than I/O.
    pub fn is_schema(&self) -> bool {
        !matches!(self, DatasetError::Io { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    /// Length of the recorded lesson in minutes.
    pub duration_min: f64,
    pub students: Vec<String>,
    /// Coded clip windows in session seconds; empty means the whole lesson.
    #[serde(default)]
    pub windows: Vec<Window>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Audio {
    pub sample_rate: u32,
    /// Normalized to [-1, 1].
    pub samples: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    /// `None` when the file is absent.
    pub behavior: Option<Vec<BehaviorEvent>>,
    pub transcript: Option<Vec<Utterance>>,
    pub audio: Option<Audio>,
}

impl Audio {
    pub fn from_pcm16(sample_rate: u32, samples: &[i16]) -> Audio {
        Audio { sample_rate, samples: samples.iter().map(|&s| f64::from(s) / 32768.0).collect() }
    }

    /// Back to 16-bit samples; exact for audio read from a 16-bit file.
    pub fn to_pcm16(&self) -> Vec<i16> {
        self.samples
            .iter()
            .map(|s| (s * 32768.0).round().clamp(f64::from(i16::MIN), f64::from(i16::MAX)) as i16)
            .collect()
    }
}

impl Dataset {
    /// Clip windows, defaulting to the whole lesson.
    pub fn windows(&self) -> Vec<Window> {
        if self.manifest.windows.is_empty() {
            vec![Window { start_s: 0.0, end_s: self.manifest.duration_min * 60.0 }]
        } else {
            self.manifest.windows.clone()
        }
    }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io { path: path.to_path_buf(), source }
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, DatasetError> {
    let text = fs::read_to_string(path).map_err(io(path))?;
    parse_jsonl(&text, path)
}

pub fn parse_jsonl<T: DeserializeOwned>(text: &str, file: &Path) -> Result<Vec<T>, DatasetError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let de = &mut serde_json::Deserializer::from_str(line);
        let item = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let message = if path == "." { e.into_inner().to_string() } else { format!("{path}: {}", e.into_inner()) };
            DatasetError::Schema { file: file.to_path_buf(), line: i + 1, message }
        })?;
        out.push(item);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), DatasetError> {
    let mut text = String::new();
    for item in items {
        text.push_str(&serde_json::to_string(item).expect("dataset records serialize"));
        text.push('\n');
    }
    fs::write(path, text).map_err(io(path))
}

pub fn read_wav(path: &Path) -> Result<Audio, DatasetError> {
    let err = |message: String| DatasetError::Audio { file: path.to_path_buf(), message };
    let reader = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(source) => DatasetError::Io { path: path.to_path_buf(), source },
        other => err(other.to_string()),
    })?;
    let spec = reader.spec();
    if spec.channels != 1 || spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
        return Err(err(format!(
            "expected 16-bit PCM mono, got {} channel(s) of {}-bit {:?}",
            spec.channels, spec.bits_per_sample, spec.sample_format
        )));
    }
    let samples = reader.into_samples::<i16>().collect::<Result<Vec<i16>, _>>().map_err(|e| err(e.to_string()))?;
    Ok(Audio::from_pcm16(spec.sample_rate, &samples))
}

pub fn write_wav(path: &Path, sample_rate: u32, samples: &[i16]) -> Result<(), DatasetError> {
    let spec = hound::WavSpec { channels: 1, sample_rate, bits_per_sample: 16, sample_format: hound::SampleFormat::Int };
    let err = |e: hound::Error| DatasetError::Audio { file: path.to_path_buf(), message: e.to_string() };
    let mut w = hound::WavWriter::create(path, spec).map_err(err)?;
    for &s in samples {
        w.write_sample(s).map_err(err)?;
    }
    w.finalize().map_err(err)
}

fn optional_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Option<Vec<T>>, DatasetError> {
    if path.exists() {
        read_jsonl(path).map(Some)
    } else {
        Ok(None)
    }
}

fn schema(file: &Path, line: usize, message: impl Into<String>) -> DatasetError {
    DatasetError::Schema { file: file.to_path_buf(), line, message: message.into() }
}

/// Loads and validates one dataset directory.
pub fn load_dataset(dir: &Path) -> Result<Dataset, DatasetError> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path).map_err(io(&manifest_path))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let manifest: DatasetManifest = serde_path_to_error::deserialize(de).map_err(|e| {
        let (line, path) = (e.inner().line(), e.path().to_string());
        schema(&manifest_path, line, format!("{path}: {}", e.into_inner()))
    })?;
    if !(manifest.duration_min > 0.0) {
        return Err(schema(&manifest_path, 0, "duration_min: must be positive"));
    }

    let behavior_path = dir.join(BEHAVIOR_FILE);
    let behavior: Option<Vec<BehaviorEvent>> = optional_jsonl(&behavior_path)?;
    if let Some(events) = &behavior {
        validate_events(events).map_err(|e| {
            let line = match &e {
                super::coding::CodingError::InvalidEvent { index, .. } => index + 1,
                super::coding::CodingError::Overlap { second, .. } => second + 1,
                _ => 0,
            };
            schema(&behavior_path, line, e.to_string())
        })?;
    }

    let transcript_path = dir.join(TRANSCRIPT_FILE);
    let transcript: Option<Vec<Utterance>> = optional_jsonl(&transcript_path)?;
    if let Some(t) = &transcript {
        validate_transcript(t).map_err(|e| schema(&transcript_path, e.index + 1, e.reason))?;
    }

    let audio = match &manifest.audio {
        Some(name) => Some(read_wav(&dir.join(name))?),
        None => None,
    };
    Ok(Dataset { manifest, behavior, transcript, audio })
}

/// Writes a dataset directory. Audio is given as raw 16-bit samples.
pub fn save_dataset(dir: &Path, ds: &Dataset, audio: Option<(u32, &[i16])>) -> Result<(), DatasetError> {
    fs::create_dir_all(dir).map_err(io(dir))?;
    let manifest_path = dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&ds.manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(&manifest_path, text).map_err(io(&manifest_path))?;
    if let Some(events) = &ds.behavior {
        write_jsonl(&dir.join(BEHAVIOR_FILE), events)?;
    }
    if let Some(t) = &ds.transcript {
        write_jsonl(&dir.join(TRANSCRIPT_FILE), t)?;
    }
    if let (Some(name), Some((rate, samples))) = (&ds.manifest.audio, audio) {
        write_wav(&dir.join(name), rate, samples)?;
    }
    Ok(())
}

pub const GROUP_A_DIR: &str = "group_a";
pub const GROUP_B_DIR: &str = "group_b";

/// Loads `group_a/` and `group_b/` under `dir`.
pub fn load_pair(dir: &Path) -> Result<(Dataset, Dataset), DatasetError> {
    Ok((load_dataset(&dir.join(GROUP_A_DIR))?, load_dataset(&dir.join(GROUP_B_DIR))?))
}
