//! Six-tracker avatar solving for role-play.
//!
//! Head, waist, hands and feet are pinned to their trackers. Torso joints are
//! laid out from the waist along the waist→head axis, and elbows and knees
//! come from an analytic two-bone solve with fixed pole directions expressed
//! in the body frame (lateral = waist +x, up = waist→head, forward = lateral × up).

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{Pose, Role, TrackingError};
use crate::geometry::Vec3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkeletonConfig {
    /// Bone lengths in meters; `None` means "take from the calibration frame".
    #[serde(default)]
    pub upper_arm: Option<f64>,
    #[serde(default)]
    pub forearm: Option<f64>,
    #[serde(default)]
    pub thigh: Option<f64>,
    #[serde(default)]
    pub shin: Option<f64>,
    #[serde(default)]
    pub spine: Option<f64>,
    #[serde(default)]
    pub chest: Option<f64>,
    #[serde(default = "default_shoulder_width")]
    pub shoulder_width: f64,
    #[serde(default = "default_hip_width")]
    pub hip_width: f64,
    /// Body-frame bend direction for elbows (x lateral, y up, z forward).
    #[serde(default = "default_elbow_pole")]
    pub elbow_pole: Vec3,
    #[serde(default = "default_knee_pole")]
    pub knee_pole: Vec3,
    #[serde(default = "default_staleness_us")]
    pub staleness_us: i64,
}

fn default_shoulder_width() -> f64 {
    0.36
}
fn default_hip_width() -> f64 {
    0.2
}
fn default_elbow_pole() -> Vec3 {
    Vec3::new(0.0, 0.0, -1.0)
}
fn default_knee_pole() -> Vec3 {
    Vec3::new(0.0, 0.0, 1.0)
}
fn default_staleness_us() -> i64 {
    200_000
}

impl Default for SkeletonConfig {
    fn default() -> Self {
        Self {
            upper_arm: None,
            forearm: None,
            thigh: None,
            shin: None,
            spine: None,
            chest: None,
            shoulder_width: default_shoulder_width(),
            hip_width: default_hip_width(),
            elbow_pole: default_elbow_pole(),
            knee_pole: default_knee_pole(),
            staleness_us: default_staleness_us(),
        }
    }
}

// Fallbacks when a calibration frame yields a degenerate limb.
const MIN_BONE: f64 = 0.05;

impl SkeletonConfig {
    pub fn is_calibrated(&self) -> bool {
        [self.upper_arm, self.forearm, self.thigh, self.shin, self.spine, self.chest]
            .iter()
            .all(Option::is_some)
    }

    /// Fills every unset length from a frame where the presenter stands with
    /// straight limbs. Lengths already configured are kept.
    pub fn calibrate(&self, frame: &BodyFrame) -> SkeletonConfig {
        let torso = frame.head.distance(frame.pelvis).max(MIN_BONE * 4.0);
        let spine = self.spine.unwrap_or(0.35 * torso);
        let chest = self.chest.unwrap_or(0.75 * torso);
        let basis = frame.basis();
        let chest_center = frame.pelvis + basis.up * chest;
        let half_sw = self.shoulder_width / 2.0;
        let half_hw = self.hip_width / 2.0;
        let arm = 0.5
            * ((chest_center + basis.lateral * half_sw).distance(frame.left_hand)
                + (chest_center - basis.lateral * half_sw).distance(frame.right_hand));
        let leg = 0.5
            * ((frame.pelvis + basis.lateral * half_hw).distance(frame.left_foot)
                + (frame.pelvis - basis.lateral * half_hw).distance(frame.right_foot));
        let half = |len: f64, fallback: f64| if len / 2.0 >= MIN_BONE { len / 2.0 } else { fallback };
        SkeletonConfig {
            upper_arm: Some(self.upper_arm.unwrap_or_else(|| half(arm, 0.28))),
            forearm: Some(self.forearm.unwrap_or_else(|| half(arm, 0.26))),
            thigh: Some(self.thigh.unwrap_or_else(|| half(leg, 0.45))),
            shin: Some(self.shin.unwrap_or_else(|| half(leg, 0.43))),
            spine: Some(spine),
            chest: Some(chest),
            ..self.clone()
        }
    }
}

/// Tracker positions for one instant, one per body role.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyFrame {
    pub head: Vec3,
    pub pelvis: Vec3,
    pub left_hand: Vec3,
    pub right_hand: Vec3,
    pub left_foot: Vec3,
    pub right_foot: Vec3,
    pub waist_lateral: Vec3,
}

struct Basis {
    lateral: Vec3,
    up: Vec3,
    forward: Vec3,
}

impl Basis {
    fn to_world(&self, local: Vec3) -> Vec3 {
        self.lateral * local.x + self.up * local.y + self.forward * local.z
    }
}

impl BodyFrame {
    pub fn from_poses(
        poses: &BTreeMap<Role, Pose>,
        now_us: i64,
        staleness_us: i64,
    ) -> Result<BodyFrame, TrackingError> {
        let get = |role: Role| -> Result<&Pose, TrackingError> {
            let p = poses.get(&role).ok_or(TrackingError::MissingDevice(role))?;
            if now_us - p.timestamp_us > staleness_us {
                return Err(TrackingError::StalePose(role));
            }
            Ok(p)
        };
        let waist = get(Role::Waist)?;
        Ok(BodyFrame {
            head: get(Role::Head)?.position,
            pelvis: waist.position,
            left_hand: get(Role::LeftHand)?.position,
            right_hand: get(Role::RightHand)?.position,
            left_foot: get(Role::LeftFoot)?.position,
            right_foot: get(Role::RightFoot)?.position,
            waist_lateral: waist.orientation.rotate(Vec3::new(1.0, 0.0, 0.0)),
        })
    }

    fn basis(&self) -> Basis {
        let up = (self.head - self.pelvis).normalized().unwrap_or(Vec3::new(0.0, 1.0, 0.0));
        let lateral = (self.waist_lateral - up * self.waist_lateral.dot(up))
            .normalized()
            .unwrap_or_else(|| any_orthogonal(up));
        Basis { lateral, up, forward: lateral.cross(up) }
    }
}

fn any_orthogonal(v: Vec3) -> Vec3 {
    let axis = if v.x.abs() <= v.y.abs() && v.x.abs() <= v.z.abs() {
        Vec3::new(1.0, 0.0, 0.0)
    } else if v.y.abs() <= v.z.abs() {
        Vec3::new(0.0, 1.0, 0.0)
    } else {
        Vec3::new(0.0, 0.0, 1.0)
    };
    (axis - v * axis.dot(v)).normalized().unwrap_or(Vec3::new(1.0, 0.0, 0.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoBoneSolution {
    pub mid: Vec3,
    pub end: Vec3,
    /// False when the target was out of reach (or too close) and the end was clamped.
    pub reached: bool,
}

/// Analytic two-bone solve from `root` toward `target`, bending toward `pole`.
pub fn two_bone_ik(root: Vec3, target: Vec3, upper: f64, lower: f64, pole: Vec3) -> TwoBoneSolution {
    let to_target = target - root;
    let dist = to_target.norm();
    let dir = to_target.normalized().unwrap_or_else(|| {
        pole.normalized().map(any_orthogonal).unwrap_or(Vec3::new(0.0, -1.0, 0.0))
    });
    let max_reach = upper + lower;
    let min_reach = (upper - lower).abs();

    if dist >= max_reach {
        return TwoBoneSolution {
            mid: root + dir * upper,
            end: root + dir * max_reach,
            reached: dist == max_reach,
        };
    }
    let (d, end, reached) = if dist < min_reach {
        (min_reach, root + dir * min_reach, false)
    } else {
        (dist, target, true)
    };
    let bend = (pole - dir * pole.dot(dir)).normalized().unwrap_or_else(|| any_orthogonal(dir));
    let (along, across) = if d > 0.0 {
        let cos_a = ((upper * upper + d * d - lower * lower) / (2.0 * upper * d)).clamp(-1.0, 1.0);
        (upper * cos_a, upper * (1.0 - cos_a * cos_a).sqrt())
    } else {
        (0.0, upper)
    };
    TwoBoneSolution { mid: root + dir * along + bend * across, end, reached }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvatarPose {
    pub pelvis: Vec3,
    pub spine: Vec3,
    pub head: Vec3,
    pub left_shoulder: Vec3,
    pub right_shoulder: Vec3,
    pub left_elbow: Vec3,
    pub right_elbow: Vec3,
    pub left_wrist: Vec3,
    pub right_wrist: Vec3,
    pub left_hip: Vec3,
    pub right_hip: Vec3,
    pub left_knee: Vec3,
    pub right_knee: Vec3,
    pub left_ankle: Vec3,
    pub right_ankle: Vec3,
    #[serde(default)]
    pub trigger_state: BTreeSet<String>,
}

impl AvatarPose {
    /// Parent→child joint pairs, in drawing order.
    pub fn bones(&self) -> [(Vec3, Vec3); 14] {
        let neck = (self.left_shoulder + self.right_shoulder) * 0.5;
        [
            (self.pelvis, self.spine),
            (self.spine, neck),
            (neck, self.head),
            (self.left_shoulder, self.right_shoulder),
            (self.left_shoulder, self.left_elbow),
            (self.left_elbow, self.left_wrist),
            (self.right_shoulder, self.right_elbow),
            (self.right_elbow, self.right_wrist),
            (self.left_hip, self.right_hip),
            (self.left_hip, self.left_knee),
            (self.left_knee, self.left_ankle),
            (self.right_hip, self.right_knee),
            (self.right_knee, self.right_ankle),
            (self.pelvis, neck),
        ]
    }

    pub fn joints(&self) -> [Vec3; 15] {
        [
            self.pelvis,
            self.spine,
            self.head,
            self.left_shoulder,
            self.right_shoulder,
            self.left_elbow,
            self.right_elbow,
            self.left_wrist,
            self.right_wrist,
            self.left_hip,
            self.right_hip,
            self.left_knee,
            self.right_knee,
            self.left_ankle,
            self.right_ankle,
        ]
    }
}

/// Solves the avatar from the six body trackers.
///
/// Lengths missing from `skeleton` are calibrated from this frame.
pub fn solve_skeleton(
    poses: &BTreeMap<Role, Pose>,
    skeleton: &SkeletonConfig,
    now_us: i64,
) -> Result<AvatarPose, TrackingError> {
    let frame = BodyFrame::from_poses(poses, now_us, skeleton.staleness_us)?;
    let sk = if skeleton.is_calibrated() { skeleton.clone() } else { skeleton.calibrate(&frame) };
    let len = |v: Option<f64>| v.expect("calibrated");
    let basis = frame.basis();

    let chest_center = frame.pelvis + basis.up * len(sk.chest);
    let half_sw = sk.shoulder_width / 2.0;
    let half_hw = sk.hip_width / 2.0;
    let left_shoulder = chest_center + basis.lateral * half_sw;
    let right_shoulder = chest_center - basis.lateral * half_sw;
    let left_hip = frame.pelvis + basis.lateral * half_hw;
    let right_hip = frame.pelvis - basis.lateral * half_hw;

    let elbow_pole = basis.to_world(sk.elbow_pole);
    let knee_pole = basis.to_world(sk.knee_pole);
    let (ua, fa, th, sh) = (len(sk.upper_arm), len(sk.forearm), len(sk.thigh), len(sk.shin));
    let la = two_bone_ik(left_shoulder, frame.left_hand, ua, fa, elbow_pole);
    let ra = two_bone_ik(right_shoulder, frame.right_hand, ua, fa, elbow_pole);
    let ll = two_bone_ik(left_hip, frame.left_foot, th, sh, knee_pole);
    let rl = two_bone_ik(right_hip, frame.right_foot, th, sh, knee_pole);

    Ok(AvatarPose {
        pelvis: frame.pelvis,
        spine: frame.pelvis + basis.up * len(sk.spine),
        head: frame.head,
        left_shoulder,
        right_shoulder,
        left_elbow: la.mid,
        right_elbow: ra.mid,
        left_wrist: la.end,
        right_wrist: ra.end,
        left_hip,
        right_hip,
        left_knee: ll.mid,
        right_knee: rl.mid,
        left_ankle: ll.end,
        right_ankle: rl.end,
        trigger_state: BTreeSet::new(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerKind {
    /// Both wrists higher than the head by more than the margin.
    WristsAboveHead,
    LeftWristAboveHead,
    RightWristAboveHead,
    /// Wrists farther apart than the margin.
    ArmsSpread,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerRule {
    pub name: String,
    pub kind: TriggerKind,
    pub margin: f64,
    /// Command name run once when the trigger becomes active.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<String>,
}

impl TriggerRule {
    pub fn holds(&self, a: &AvatarPose) -> bool {
        let above = |w: Vec3| w.y - a.head.y > self.margin;
        match self.kind {
            TriggerKind::WristsAboveHead => above(a.left_wrist) && above(a.right_wrist),
            TriggerKind::LeftWristAboveHead => above(a.left_wrist),
            TriggerKind::RightWristAboveHead => above(a.right_wrist),
            TriggerKind::ArmsSpread => a.left_wrist.distance(a.right_wrist) > self.margin,
        }
    }
}

/// Names of every rule whose predicate holds (strict inequalities).
pub fn detect_pose_triggers(avatar: &AvatarPose, rules: &[TriggerRule]) -> BTreeSet<String> {
    rules.iter().filter(|r| r.holds(avatar)).map(|r| r.name.clone()).collect()
}
