use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::geometry::{Side, Vec3};
use crate::scene::{Direction, DisplayPair, NameTag, SlideDeck, StudentInfo};
use crate::techniques::{Owner, VirtualBall};
use crate::tracking::AvatarPose;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hello {
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub client: Option<String>,
    /// Sender's clock at the time of the hello; later timestamps are remapped
    /// onto the server clock using this offset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clock_us: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorPayload {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tool {
    None,
    Paddle,
    Model,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Command {
    NextSlide,
    PrevSlide,
    FreezeAfterimage,
    ClearAfterimages,
    RolePlay {
        active: bool,
    },
    /// A click on the back-side dashboard at board coordinates.
    Praise {
        u: f64,
        v: f64,
    },
    SetTool {
        device_id: String,
        tool: Tool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        side: Option<Side>,
    },
    StrokeBegin {
        device_id: String,
        side: Side,
    },
    StrokeEnd {
        device_id: String,
    },
    ThrowBall {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        origin: Option<Vec3>,
        direction: Vec3,
        speed: f64,
    },
    MoveViewer {
        side: Side,
        eye: Vec3,
    },
    SetTeacherEye {
        eye: Vec3,
    },
    SetStudents {
        students: Vec<StudentInfo>,
    },
    UpdateMetrics {
        student_id: String,
        metrics: BTreeMap<String, f64>,
    },
    ResetModel,
    ClearStrokes,
    LoadDeck {
        deck: SlideDeck,
    },
    AddPlaceholder {
        label: String,
        center: [f64; 2],
        width: f64,
        height: f64,
    },
    RemoveBall,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Event {
    BoundaryHit {
        direction: Direction,
        index: usize,
    },
    SlideChanged {
        index: usize,
    },
    StrokeCommitted {
        layer_id: u64,
        device_id: String,
        side: Side,
    },
    AfterimageFrozen {
        layer_id: u64,
    },
    PraiseGiven {
        student_id: String,
        praise_count: u32,
    },
    Contact {
        device_id: String,
        point: Vec3,
        velocity: Vec3,
    },
    BallSpawned {
        position: Vec3,
        velocity: Vec3,
        owner: Owner,
    },
    PaddleHit {
        device_id: String,
        side: Side,
        velocity: Vec3,
    },
    BallOutOfBounds {
        position: Vec3,
    },
    TriggerFired {
        trigger: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        action: Option<String>,
    },
    Calibrated {
        upper_arm: f64,
        forearm: f64,
        thigh: f64,
        shin: f64,
        spine: f64,
        chest: f64,
    },
    Extrusion {
        device_id: String,
        engaged: bool,
    },
    SeqGap {
        expected: u64,
        got: u64,
    },
    InputError {
        message: String,
    },
    RenderError {
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub t_us: i64,
    pub frame_id: u64,
    #[serde(flatten)]
    pub event: Event,
}

/// Authoritative session state after one tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub frame_id: u64,
    pub now_us: i64,
    pub slide_index: usize,
    pub slide_count: usize,
    pub role_play: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ball: Option<VirtualBall>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub avatar: Option<AvatarPose>,
    #[serde(default)]
    pub tags: Vec<NameTag>,
    #[serde(default)]
    pub extruded_cells: usize,
    pub display: DisplayPair,
    /// sha256 of the canonical display pair.
    pub digest: String,
}
