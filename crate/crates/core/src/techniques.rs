//! Dynamic interaction techniques: the shared virtual ball, physical-to-virtual
//! handoff, paddle hits and depth extrusion modeling.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{ScreenGeometry, ScreenPoint, Side, Vec3};
use crate::tracking::{estimate_velocity, Pose};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TechniqueError {
    #[error("device {0} is not in modeling mode")]
    NotInModelingMode(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BallState {
    InPlay,
    OutOfBounds,
    Absorbed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Owner {
    Front,
    Back,
    None,
}

impl From<Side> for Owner {
    fn from(s: Side) -> Owner {
        match s {
            Side::Front => Owner::Front,
            Side::Back => Owner::Back,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VirtualBall {
    pub position: Vec3,
    pub velocity: Vec3,
    pub state: BallState,
    pub owner_side: Owner,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlayVolume {
    pub min: Vec3,
    pub max: Vec3,
}

impl PlayVolume {
    pub fn contains(&self, p: Vec3) -> bool {
        p.x >= self.min.x
            && p.x <= self.max.x
            && p.y >= self.min.y
            && p.y <= self.max.y
            && p.z >= self.min.z
            && p.z <= self.max.z
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicsConfig {
    #[serde(default = "default_gravity")]
    pub gravity: Vec3,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_play_volume")]
    pub play_volume: PlayVolume,
    #[serde(default = "default_contact_threshold")]
    pub contact_threshold: f64,
    #[serde(default = "default_restitution")]
    pub restitution: f64,
    #[serde(default = "default_contact_cooldown_us")]
    pub contact_cooldown_us: i64,
    #[serde(default = "default_velocity_window_us")]
    pub velocity_window_us: i64,
    #[serde(default = "default_ball_radius")]
    pub ball_radius: f64,
    #[serde(default = "default_paddle_radius")]
    pub paddle_radius: f64,
}

fn default_gravity() -> Vec3 {
    Vec3::new(0.0, -9.81, 0.0)
}
fn default_dt() -> f64 {
    1.0 / 240.0
}
fn default_play_volume() -> PlayVolume {
    PlayVolume { min: Vec3::new(-4.0, -0.5, -6.0), max: Vec3::new(4.0, 5.0, 10.0) }
}
fn default_contact_threshold() -> f64 {
    0.05
}
fn default_restitution() -> f64 {
    0.9
}
fn default_contact_cooldown_us() -> i64 {
    500_000
}
fn default_velocity_window_us() -> i64 {
    100_000
}
fn default_ball_radius() -> f64 {
    0.1
}
fn default_paddle_radius() -> f64 {
    0.2
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields defaulted")
    }
}

/// One semi-implicit Euler step: velocity first, then position with the new velocity.
pub fn step_ballistic(ball: &VirtualBall, cfg: &PhysicsConfig) -> VirtualBall {
    if ball.state != BallState::InPlay {
        return *ball;
    }
    let velocity = ball.velocity + cfg.gravity * cfg.dt;
    let position = ball.position + velocity * cfg.dt;
    let state = if cfg.play_volume.contains(position) { BallState::InPlay } else { BallState::OutOfBounds };
    VirtualBall { position, velocity, state, owner_side: ball.owner_side }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Contact {
    pub point: ScreenPoint,
    pub velocity: Vec3,
    pub timestamp_us: i64,
}

/// Checks whether the newest sample of a tracked ball just touched the board.
///
/// A contact needs the newest sample within `contact_threshold` of the plane,
/// the previous sample outside it, and a windowed velocity pointing at the
/// plane from the side the ball came from. Contacts within the cooldown of
/// `last_contact_us` are suppressed.
pub fn detect_screen_contact(
    history: &[Pose],
    cfg: &PhysicsConfig,
    screen: &ScreenGeometry,
    last_contact_us: Option<i64>,
) -> Option<Contact> {
    let [.., prev, cur] = history else { return None };
    let thr = cfg.contact_threshold;
    if cur.position.z.abs() > thr || prev.position.z.abs() <= thr {
        return None;
    }
    if let Some(last) = last_contact_us {
        if cur.timestamp_us - last < cfg.contact_cooldown_us {
            return None;
        }
    }
    let velocity = estimate_velocity(history, cfg.velocity_window_us).ok()?.linear;
    let from_side = prev.position.z.signum();
    if velocity.z * from_side >= 0.0 {
        return None;
    }
    Some(Contact {
        point: screen.point(cur.position.x, cur.position.y),
        velocity,
        timestamp_us: cur.timestamp_us,
    })
}

/// Replays a whole history through [`detect_screen_contact`], returning every contact.
pub fn scan_contacts(history: &[Pose], cfg: &PhysicsConfig, screen: &ScreenGeometry) -> Vec<Contact> {
    let mut last = None;
    let mut out = Vec::new();
    for end in 2..=history.len() {
        if let Some(c) = detect_screen_contact(&history[..end], cfg, screen, last) {
            last = Some(c.timestamp_us);
            out.push(c);
        }
    }
    out
}

/// Spawns the virtual ball where the physical one met the board.
pub fn handoff_physical_to_virtual(contact: &Contact) -> VirtualBall {
    VirtualBall {
        position: Vec3::new(contact.point.u, contact.point.v, 0.0),
        velocity: contact.velocity,
        state: BallState::InPlay,
        owner_side: Owner::None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Paddle {
    pub pose: Pose,
    pub radius: f64,
}

impl Paddle {
    pub fn side(&self) -> Side {
        Side::of_z(self.pose.position.z)
    }
}

/// Reflects the ball off a (stationary) paddle it is touching and approaching.
pub fn paddle_hit(ball: &VirtualBall, paddle: &Paddle, cfg: &PhysicsConfig) -> Option<VirtualBall> {
    if ball.state != BallState::InPlay {
        return None;
    }
    let offset = ball.position - paddle.pose.position;
    if offset.norm() > paddle.radius {
        return None;
    }
    let normal = offset.normalized()?;
    let approach = ball.velocity.dot(normal);
    if approach >= 0.0 {
        return None;
    }
    let reflected = ball.velocity - normal * (2.0 * approach);
    Some(VirtualBall {
        velocity: reflected * cfg.restitution,
        owner_side: paddle.side().into(),
        ..*ball
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelingConfig {
    #[serde(default = "default_cols")]
    pub cols: usize,
    #[serde(default = "default_rows")]
    pub rows: usize,
    #[serde(default = "default_max_extrusion")]
    pub max_extrusion: f64,
    #[serde(default = "default_hysteresis")]
    pub hysteresis: f64,
}

fn default_cols() -> usize {
    64
}
fn default_rows() -> usize {
    48
}
fn default_max_extrusion() -> f64 {
    0.5
}
fn default_hysteresis() -> f64 {
    0.01
}

impl Default for ModelingConfig {
    fn default() -> Self {
        Self {
            cols: default_cols(),
            rows: default_rows(),
            max_extrusion: default_max_extrusion(),
            hysteresis: default_hysteresis(),
        }
    }
}

/// Per-cell extrusion depth over the board, cell (0, 0) at the bottom-left as seen from the front.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtrusionField {
    pub cols: usize,
    pub rows: usize,
    pub width: f64,
    pub height: f64,
    pub max_extrusion: f64,
    pub hysteresis: f64,
    depths: Vec<f64>,
}

/// The modeling controller's state: which side it pushes from and whether it
/// is currently engaged with the surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelingTool {
    pub side: Side,
    pub engaged: bool,
}

impl ExtrusionField {
    pub fn new(screen: &ScreenGeometry, cfg: &ModelingConfig) -> ExtrusionField {
        ExtrusionField {
            cols: cfg.cols,
            rows: cfg.rows,
            width: screen.width,
            height: screen.height,
            max_extrusion: cfg.max_extrusion,
            hysteresis: cfg.hysteresis,
            depths: vec![0.0; cfg.cols * cfg.rows],
        }
    }

    pub fn cell_size(&self) -> (f64, f64) {
        (self.width / self.cols as f64, self.height / self.rows as f64)
    }

    pub fn cell_at(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let (cw, ch) = self.cell_size();
        let cx = ((x + self.width / 2.0) / cw).floor();
        let cy = ((y + self.height / 2.0) / ch).floor();
        if !(cx >= 0.0 && cy >= 0.0 && (cx as usize) < self.cols && (cy as usize) < self.rows) {
            return None;
        }
        Some((cx as usize, cy as usize))
    }

    pub fn cell_center(&self, col: usize, row: usize) -> (f64, f64) {
        let (cw, ch) = self.cell_size();
        (-self.width / 2.0 + (col as f64 + 0.5) * cw, -self.height / 2.0 + (row as f64 + 0.5) * ch)
    }

    pub fn depth(&self, col: usize, row: usize) -> f64 {
        self.depths[row * self.cols + col]
    }

    pub fn reset(&mut self) {
        self.depths.iter_mut().for_each(|d| *d = 0.0);
    }

    /// Non-zero cells as `(col, row, depth)`, row-major.
    pub fn nonzero(&self) -> Vec<(usize, usize, f64)> {
        self.depths
            .iter()
            .enumerate()
            .filter(|(_, d)| **d > 0.0)
            .map(|(i, d)| (i % self.cols, i / self.cols, *d))
            .collect()
    }

    /// Applies one controller sample. Returns `Some(new engaged state)` when the
    /// tool engages or releases.
    ///
    /// Penetration is measured past the plane away from the tool's side. The
    /// tool engages when it penetrates and releases once it is back more than
    /// `hysteresis` in front of the plane; while engaged, the cell under it
    /// keeps the maximum penetration seen, clamped to `max_extrusion`.
    pub fn extrude(&mut self, tool: &mut ModelingTool, controller: &Pose) -> Option<bool> {
        let z_side = controller.position.z * tool.side.sign();
        let penetration = -z_side;
        let before = tool.engaged;
        if !tool.engaged && penetration > 0.0 {
            tool.engaged = true;
        } else if tool.engaged && z_side > self.hysteresis {
            tool.engaged = false;
        }
        if tool.engaged && penetration > 0.0 {
            if let Some((c, r)) = self.cell_at(controller.position.x, controller.position.y) {
                let idx = r * self.cols + c;
                self.depths[idx] = self.depths[idx].max(penetration).clamp(0.0, self.max_extrusion);
            }
        }
        (before != tool.engaged).then_some(tool.engaged)
    }
}

/// Modeling entry point for a device that may not hold the modeling tool.
pub fn extrude(
    field: &mut ExtrusionField,
    tool: Option<&mut ModelingTool>,
    controller: &Pose,
) -> Result<Option<bool>, TechniqueError> {
    let tool = tool.ok_or_else(|| TechniqueError::NotInModelingMode(controller.device_id.clone()))?;
    Ok(field.extrude(tool, controller))
}
