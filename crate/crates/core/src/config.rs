//! Engine configuration file (UTF-8 JSON).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{ScreenGeometry, Side, Vec3, Viewer, ViewerSpots};
use crate::scene::SceneStyle;
use crate::techniques::{ModelingConfig, PhysicsConfig};
use crate::tracking::{SkeletonConfig, TriggerKind, TriggerRule};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid config at {path}: {reason}")]
    Invalid { path: String, reason: String },
    #[error("cannot read config {0}: {1}")]
    Io(PathBuf, std::io::Error),
}

impl ConfigError {
    pub fn path(&self) -> Option<&str> {
        match self {
            ConfigError::Invalid { path, .. } => Some(path),
            ConfigError::Io(..) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingConfig {
    /// EMA weight applied to hand-controller positions before use; 1 disables smoothing.
    #[serde(default = "default_alpha")]
    pub smoothing_alpha: f64,
    #[serde(default = "default_history")]
    pub history_capacity: usize,
}

fn default_alpha() -> f64 {
    1.0
}
fn default_history() -> usize {
    256
}

impl Default for TrackingConfig {
    fn default() -> Self {
        Self { smoothing_alpha: default_alpha(), history_capacity: default_history() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    #[serde(default)]
    pub screen: ScreenGeometry,
    #[serde(default)]
    pub viewers: ViewerSpots,
    /// Eye used for the dashboard pass; defaults to the back best spot.
    #[serde(default)]
    pub teacher_eye: Option<Vec3>,
    #[serde(default)]
    pub physics: PhysicsConfig,
    #[serde(default)]
    pub modeling: ModelingConfig,
    #[serde(default)]
    pub skeleton: SkeletonConfig,
    #[serde(default = "default_triggers")]
    pub triggers: Vec<TriggerRule>,
    #[serde(default)]
    pub scene: SceneStyle,
    #[serde(default)]
    pub tracking: TrackingConfig,
    #[serde(default = "default_praise_radius")]
    pub praise_radius: f64,
    #[serde(default = "default_tick_rate")]
    pub tick_rate_hz: u32,
    #[serde(default = "default_port")]
    pub port: u16,
    /// HTTP/WebSocket port; defaults to `port + 1`.
    #[serde(default)]
    pub http_port: Option<u16>,
    #[serde(default)]
    pub seed: u64,
    /// Slide deck file, resolved relative to the config file.
    #[serde(default)]
    pub deck: Option<PathBuf>,
}

fn default_triggers() -> Vec<TriggerRule> {
    vec![TriggerRule {
        name: "hands_up".into(),
        kind: TriggerKind::WristsAboveHead,
        margin: 0.1,
        action: None,
    }]
}
fn default_praise_radius() -> f64 {
    0.3
}
fn default_tick_rate() -> u32 {
    60
}
fn default_port() -> u16 {
    7340
}

impl Default for EngineConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields defaulted")
    }
}

fn invalid(path: &str, reason: &str) -> ConfigError {
    ConfigError::Invalid { path: path.to_string(), reason: reason.to_string() }
}

fn positive(path: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(path, "must be a positive number"))
    }
}

fn finite(path: &str, v: Vec3) -> Result<(), ConfigError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(invalid(path, "must be finite"))
    }
}

impl EngineConfig {
    pub fn from_json(text: &str) -> Result<EngineConfig, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: EngineConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            invalid(&path, &e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<EngineConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(path.to_path_buf(), e))?;
        let mut cfg = Self::from_json(&text)?;
        if let (Some(deck), Some(dir)) = (&cfg.deck, path.parent()) {
            if deck.is_relative() {
                cfg.deck = Some(dir.join(deck));
            }
        }
        Ok(cfg)
    }

    pub fn http_port(&self) -> u16 {
        self.http_port.unwrap_or(self.port.wrapping_add(1))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        positive("screen.width", self.screen.width)?;
        positive("screen.height", self.screen.height)?;
        finite("viewers.front", self.viewers.front)?;
        finite("viewers.back", self.viewers.back)?;
        if self.viewers.front.z <= 0.0 {
            return Err(invalid("viewers.front.z", "front viewer must have z > 0"));
        }
        if self.viewers.back.z >= 0.0 {
            return Err(invalid("viewers.back.z", "back viewer must have z < 0"));
        }
        if let Some(t) = self.teacher_eye {
            finite("teacher_eye", t)?;
            if t.z >= 0.0 {
                return Err(invalid("teacher_eye.z", "teacher eye must have z < 0"));
            }
        }
        let p = &self.physics;
        finite("physics.gravity", p.gravity)?;
        positive("physics.dt", p.dt)?;
        positive("physics.contact_threshold", p.contact_threshold)?;
        positive("physics.ball_radius", p.ball_radius)?;
        positive("physics.paddle_radius", p.paddle_radius)?;
        if !(0.0..=1.0).contains(&p.restitution) {
            return Err(invalid("physics.restitution", "must lie in [0, 1]"));
        }
        if p.contact_cooldown_us < 0 {
            return Err(invalid("physics.contact_cooldown_us", "must not be negative"));
        }
        if p.velocity_window_us <= 0 {
            return Err(invalid("physics.velocity_window_us", "must be positive"));
        }
        let (lo, hi) = (p.play_volume.min, p.play_volume.max);
        if !(lo.x < hi.x && lo.y < hi.y && lo.z < hi.z) {
            return Err(invalid("physics.play_volume", "min must be below max on every axis"));
        }
        if self.modeling.cols == 0 {
            return Err(invalid("modeling.cols", "must be positive"));
        }
        if self.modeling.rows == 0 {
            return Err(invalid("modeling.rows", "must be positive"));
        }
        positive("modeling.max_extrusion", self.modeling.max_extrusion)?;
        if !(self.modeling.hysteresis >= 0.0) {
            return Err(invalid("modeling.hysteresis", "must not be negative"));
        }
        let sk = &self.skeleton;
        for (name, v) in [
            ("upper_arm", sk.upper_arm),
            ("forearm", sk.forearm),
            ("thigh", sk.thigh),
            ("shin", sk.shin),
            ("spine", sk.spine),
            ("chest", sk.chest),
        ] {
            if let Some(v) = v {
                positive(&format!("skeleton.{name}"), v)?;
            }
        }
        positive("skeleton.shoulder_width", sk.shoulder_width)?;
        positive("skeleton.hip_width", sk.hip_width)?;
        if sk.staleness_us <= 0 {
            return Err(invalid("skeleton.staleness_us", "must be positive"));
        }
        for (i, r) in self.triggers.iter().enumerate() {
            if r.name.is_empty() {
                return Err(invalid(&format!("triggers[{i}].name"), "must not be empty"));
            }
            if !r.margin.is_finite() {
                return Err(invalid(&format!("triggers[{i}].margin"), "must be finite"));
            }
        }
        let s = &self.scene;
        if !(s.afterimage_decay > 0.0 && s.afterimage_decay < 1.0) {
            return Err(invalid("scene.afterimage_decay", "must lie in (0, 1)"));
        }
        if !(0.0..=1.0).contains(&s.afterimage_floor) {
            return Err(invalid("scene.afterimage_floor", "must lie in [0, 1]"));
        }
        positive("scene.tag_width", s.tag_width)?;
        positive("scene.tag_height", s.tag_height)?;
        if !(s.clip_margin >= 0.0 && s.clip_margin.is_finite()) {
            return Err(invalid("scene.clip_margin", "must not be negative"));
        }
        positive("scene.stroke_width", s.stroke_width)?;
        if !(self.tracking.smoothing_alpha > 0.0 && self.tracking.smoothing_alpha <= 1.0) {
            return Err(invalid("tracking.smoothing_alpha", "must lie in (0, 1]"));
        }
        if self.tracking.history_capacity < 2 {
            return Err(invalid("tracking.history_capacity", "must be at least 2"));
        }
        positive("praise_radius", self.praise_radius)?;
        if self.tick_rate_hz == 0 {
            return Err(invalid("tick_rate_hz", "must be positive"));
        }
        Ok(())
    }

    pub fn viewer(&self, side: Side) -> Viewer {
        crate::geometry::default_viewer(side, &self.viewers)
    }

    pub fn teacher_viewer(&self) -> Viewer {
        Viewer { eye: self.teacher_eye.unwrap_or(self.viewers.back), side: Side::Back }
    }

    pub fn tick_period_us(&self) -> i64 {
        1_000_000 / i64::from(self.tick_rate_hz)
    }
}
