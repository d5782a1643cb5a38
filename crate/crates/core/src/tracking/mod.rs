//! Tracked-device pose streams: smoothing, velocity estimation and avatar solving.

mod skeleton;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Quat, Vec3};

pub use skeleton::{
    detect_pose_triggers, solve_skeleton, two_bone_ik, AvatarPose, BodyFrame, SkeletonConfig, TriggerKind,
    TriggerRule, TwoBoneSolution,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrackingError {
    #[error("pose history is empty")]
    EmptyHistory,
    #[error("need at least two samples inside the window, found {0}")]
    InsufficientSamples(usize),
    #[error("no pose for required role {0:?}")]
    MissingDevice(Role),
    #[error("pose for role {0:?} is stale")]
    StalePose(Role),
}

/// What a tracked device is strapped to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Head,
    Waist,
    LeftFoot,
    RightFoot,
    LeftHand,
    RightHand,
    Ball,
}

impl Role {
    /// The six body-worn roles needed to drive the avatar.
    pub const BODY: [Role; 6] = [
        Role::Head,
        Role::Waist,
        Role::LeftFoot,
        Role::RightFoot,
        Role::LeftHand,
        Role::RightHand,
    ];

    pub fn is_hand(self) -> bool {
        matches!(self, Role::LeftHand | Role::RightHand)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub device_id: String,
    pub role: Role,
    pub timestamp_us: i64,
    pub position: Vec3,
    pub orientation: Quat,
}

impl Pose {
    pub fn new(device_id: impl Into<String>, role: Role, timestamp_us: i64, position: Vec3) -> Pose {
        Pose {
            device_id: device_id.into(),
            role,
            timestamp_us,
            position,
            orientation: Quat::IDENTITY,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.position.is_finite() && self.orientation.is_unit()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityEstimate {
    pub linear: Vec3,
    pub window_us: i64,
}

/// Exponentially smoothed position over a time-ordered history.
///
/// The first sample seeds the filter; `alpha` weights each newer sample.
/// Orientation and metadata come from the latest sample.
pub fn smooth_pose(history: &[Pose], alpha: f64) -> Result<Pose, TrackingError> {
    let (first, rest) = history.split_first().ok_or(TrackingError::EmptyHistory)?;
    let alpha = alpha.clamp(f64::MIN_POSITIVE, 1.0);
    let mut acc = first.position;
    for p in rest {
        acc = acc + (p.position - acc) * alpha;
    }
    let latest = history.last().expect("non-empty");
    if alpha == 1.0 {
        return Ok(latest.clone());
    }
    Ok(Pose { position: acc, ..latest.clone() })
}

/// Least-squares slope of position against time over the trailing window.
pub fn estimate_velocity(history: &[Pose], window_us: i64) -> Result<VelocityEstimate, TrackingError> {
    let latest = history.last().ok_or(TrackingError::InsufficientSamples(0))?;
    let cutoff = latest.timestamp_us.saturating_sub(window_us);
    let window: Vec<&Pose> = history
        .iter()
        .rev()
        .take_while(|p| p.timestamp_us >= cutoff)
        .collect();
    if window.len() < 2 {
        return Err(TrackingError::InsufficientSamples(window.len()));
    }
    // Center time and position on the newest sample to keep the sums small.
    let t0 = latest.timestamp_us;
    let n = window.len() as f64;
    let ts: Vec<f64> = window.iter().map(|p| (p.timestamp_us - t0) as f64 * 1e-6).collect();
    let t_mean = ts.iter().sum::<f64>() / n;
    let mut p_mean = Vec3::ZERO;
    for p in &window {
        p_mean = p_mean + (p.position - latest.position);
    }
    p_mean = p_mean * (1.0 / n);
    let mut sxx = 0.0;
    let mut sxy = Vec3::ZERO;
    for (p, &t) in window.iter().zip(&ts) {
        let dt = t - t_mean;
        sxx += dt * dt;
        sxy = sxy + (p.position - latest.position - p_mean) * dt;
    }
    if sxx <= 0.0 {
        return Err(TrackingError::InsufficientSamples(1));
    }
    Ok(VelocityEstimate { linear: sxy * (1.0 / sxx), window_us })
}

/// Bounded per-device pose history.
#[derive(Debug, Clone, Default)]
pub struct PoseHistory {
    samples: Vec<Pose>,
    capacity: usize,
}

impl PoseHistory {
    pub fn with_capacity(capacity: usize) -> Self {
        Self { samples: Vec::new(), capacity: capacity.max(2) }
    }

    /// Appends a sample; out-of-order timestamps are rejected and returned.
    pub fn push(&mut self, pose: Pose) -> Result<(), Pose> {
        if let Some(last) = self.samples.last() {
            if pose.timestamp_us < last.timestamp_us {
                return Err(pose);
            }
        }
        if self.samples.len() == self.capacity {
            self.samples.remove(0);
        }
        self.samples.push(pose);
        Ok(())
    }

    pub fn samples(&self) -> &[Pose] {
        &self.samples
    }

    pub fn latest(&self) -> Option<&Pose> {
        self.samples.last()
    }
}
