//! JSON bodies of the HTTP API, shared by the server and its clients.

use base64::Engine as _;
use serde::{Deserialize, Serialize};

use crate::analytics::coding::BehaviorEvent;
use crate::analytics::dataset::{Audio, Dataset, DatasetManifest};
use crate::analytics::discourse::Utterance;
use crate::analytics::report::{Report, ReportOptions};
use crate::analytics::stats::{PMethod, TTestVariant};
use crate::geometry::Vec3;
use crate::protocol::EventRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub protocol_version: u32,
    pub frame_id: u64,
    pub clients: usize,
}

/// Reply to an accepted command: the frame it was applied in and the events
/// that frame produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandAck {
    pub frame_id: u64,
    pub events: Vec<EventRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectRequest {
    pub eye: Vec3,
    pub point: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoSampleRequest {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    #[serde(default)]
    pub method: PMethod,
    #[serde(default)]
    pub variant: TTestVariant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaRequest {
    pub confusion: Vec<Vec<u64>>,
}

/// 16-bit PCM samples, little-endian, base64-encoded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioPayload {
    pub sample_rate: u32,
    pub pcm16_base64: String,
}

impl AudioPayload {
    pub fn from_audio(audio: &Audio) -> AudioPayload {
        let bytes: Vec<u8> = audio.to_pcm16().iter().flat_map(|s| s.to_le_bytes()).collect();
        AudioPayload {
            sample_rate: audio.sample_rate,
            pcm16_base64: base64::engine::general_purpose::STANDARD.encode(bytes),
        }
    }

    pub fn to_audio(&self) -> Result<Audio, String> {
        let bytes = base64::engine::general_purpose::STANDARD
            .decode(&self.pcm16_base64)
            .map_err(|e| e.to_string())?;
        if bytes.len() % 2 != 0 {
            return Err("odd number of PCM bytes".into());
        }
        let samples: Vec<i16> = bytes.chunks_exact(2).map(|c| i16::from_le_bytes([c[0], c[1]])).collect();
        Ok(Audio::from_pcm16(self.sample_rate, &samples))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetPayload {
    pub manifest: DatasetManifest,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub behavior: Option<Vec<BehaviorEvent>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript: Option<Vec<Utterance>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio: Option<AudioPayload>,
}

impl DatasetPayload {
    pub fn from_dataset(ds: &Dataset) -> DatasetPayload {
        DatasetPayload {
            manifest: ds.manifest.clone(),
            behavior: ds.behavior.clone(),
            transcript: ds.transcript.clone(),
            audio: ds.audio.as_ref().map(AudioPayload::from_audio),
        }
    }

    pub fn into_dataset(self) -> Result<Dataset, String> {
        let audio = self.audio.map(|a| a.to_audio()).transpose()?;
        Ok(Dataset { manifest: self.manifest, behavior: self.behavior, transcript: self.transcript, audio })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRequest {
    pub group_a: DatasetPayload,
    pub group_b: DatasetPayload,
    #[serde(default)]
    pub options: ReportOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportResponse {
    pub report: Report,
    pub text: String,
}
