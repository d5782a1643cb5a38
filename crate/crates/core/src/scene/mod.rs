//! The board's retained scene and its per-side render pass.

mod deck;
mod display;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{drop_to_plane, project_point, GeometryError, ScreenGeometry, ScreenPoint, Side, Vec3, Viewer};
use crate::tracking::{AvatarPose, Pose};

pub use deck::{Direction, ItemKind, Navigation, Slide, SlideDeck, SlideItem};
pub use display::{
    clip_polyline, compose_display_lists, compose_lenient, DisplayList, DisplayPair, Primitive, Rgba, ViewerPair,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("layer {layer}: {source}")]
    Projection { layer: u64, source: GeometryError },
    #[error("device {0} is not in writing mode")]
    NotInWritingMode(String),
    #[error("role-play is not active")]
    RolePlayInactive,
    #[error("the dashboard viewer must stand behind the board")]
    TeacherEyeNotBack,
    #[error("invalid slide deck: {0}")]
    InvalidDeck(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneStyle {
    #[serde(default = "default_inconspicuous")]
    pub inconspicuous_color: Rgba,
    #[serde(default = "default_conspicuous")]
    pub conspicuous_color: Rgba,
    #[serde(default = "default_text_color")]
    pub text_color: Rgba,
    #[serde(default = "default_avatar_color")]
    pub avatar_color: Rgba,
    #[serde(default = "default_avatar_color")]
    pub afterimage_color: Rgba,
    #[serde(default = "default_afterimage_decay")]
    pub afterimage_decay: f64,
    #[serde(default = "default_afterimage_floor")]
    pub afterimage_floor: f64,
    #[serde(default = "default_tag_offset")]
    pub tag_offset: f64,
    #[serde(default = "default_tag_width")]
    pub tag_width: f64,
    #[serde(default = "default_tag_height")]
    pub tag_height: f64,
    #[serde(default = "default_clip_margin")]
    pub clip_margin: f64,
    #[serde(default = "default_stroke_width")]
    pub stroke_width: f64,
    #[serde(default = "default_bone_width")]
    pub bone_width: f64,
}

fn default_inconspicuous() -> Rgba {
    Rgba::INCONSPICUOUS_GRAY
}
fn default_conspicuous() -> Rgba {
    Rgba::CONSPICUOUS_YELLOW
}
fn default_text_color() -> Rgba {
    Rgba::WHITE
}
fn default_avatar_color() -> Rgba {
    Rgba([80, 200, 255, 255])
}
fn default_afterimage_decay() -> f64 {
    0.7
}
fn default_afterimage_floor() -> f64 {
    0.15
}
fn default_tag_offset() -> f64 {
    0.25
}
fn default_tag_width() -> f64 {
    0.4
}
fn default_tag_height() -> f64 {
    0.12
}
fn default_clip_margin() -> f64 {
    0.05
}
fn default_stroke_width() -> f64 {
    0.01
}
fn default_bone_width() -> f64 {
    0.03
}

impl Default for SceneStyle {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields defaulted")
    }
}

impl SceneStyle {
    /// Opacity of the afterimage at age rank `rank` (0 = newest).
    pub fn afterimage_opacity(&self, rank: usize) -> f64 {
        let mut o = 1.0;
        for _ in 0..rank {
            o *= self.afterimage_decay;
            if o <= self.afterimage_floor {
                return self.afterimage_floor;
            }
        }
        o
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Slide,
    Stroke,
    Avatar,
    Afterimage,
    Tag,
    Object,
    MediaPlaceholder,
}

impl LayerKind {
    pub fn default_z(self) -> i32 {
        match self {
            LayerKind::MediaPlaceholder => -10,
            LayerKind::Slide => 0,
            LayerKind::Object => 10,
            LayerKind::Stroke => 20,
            LayerKind::Afterimage => 30,
            LayerKind::Avatar => 40,
            LayerKind::Tag => 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Visibility {
    pub front: bool,
    pub back: bool,
}

impl Visibility {
    pub const BOTH: Visibility = Visibility { front: true, back: true };
    pub const BACK_ONLY: Visibility = Visibility { front: false, back: true };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stroke {
    pub points: Vec<ScreenPoint>,
    pub author_side: Side,
    pub color_front: Rgba,
    pub color_back: Rgba,
}

impl Stroke {
    pub fn color_on(&self, side: Side) -> Rgba {
        match side {
            Side::Front => self.color_front,
            Side::Back => self.color_back,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtrudedCell {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SceneObject {
    Ball { position: Vec3, radius: f64 },
    Extrusion { cells: Vec<ExtrudedCell>, cell_width: f64, cell_height: f64, max_depth: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LayerPayload {
    /// The deck's current slide.
    Slide,
    Stroke(Stroke),
    Avatar(AvatarPose),
    Afterimage { avatar: AvatarPose, frozen_at_us: i64 },
    /// The dashboard's name tags.
    Tags,
    Object(SceneObject),
    /// Stand-in for live video content; carries no pixels.
    MediaPlaceholder { label: String, center: [f64; 2], width: f64, height: f64 },
}

impl LayerPayload {
    pub fn kind(&self) -> LayerKind {
        match self {
            LayerPayload::Slide => LayerKind::Slide,
            LayerPayload::Stroke(_) => LayerKind::Stroke,
            LayerPayload::Avatar(_) => LayerKind::Avatar,
            LayerPayload::Afterimage { .. } => LayerKind::Afterimage,
            LayerPayload::Tags => LayerKind::Tag,
            LayerPayload::Object(_) => LayerKind::Object,
            LayerPayload::MediaPlaceholder { .. } => LayerKind::MediaPlaceholder,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub id: u64,
    pub kind: LayerKind,
    pub z_order: i32,
    pub visibility: Visibility,
    pub payload: LayerPayload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentInfo {
    pub id: String,
    pub name: String,
    pub head_pos: Vec3,
    #[serde(default)]
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NameTag {
    pub student_id: String,
    pub name: String,
    pub center: ScreenPoint,
    pub metrics: BTreeMap<String, f64>,
    pub praise_count: u32,
}

impl NameTag {
    pub fn lines(&self) -> Vec<String> {
        let mut lines = vec![self.name.clone()];
        lines.extend(self.metrics.iter().map(|(k, v)| format!("{k}: {v:.2}")));
        lines.push(format!("praise: {}", self.praise_count));
        lines
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Dashboard {
    /// Sorted by student id.
    pub tags: Vec<NameTag>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PraiseGiven {
    pub student_id: String,
    pub timestamp_us: i64,
    pub praise_count: u32,
}

#[derive(Debug, Clone, PartialEq)]
struct PenState {
    side: Side,
    points: Vec<ScreenPoint>,
    layer: Option<u64>,
}

pub const SLIDE_LAYER: u64 = 1;
pub const TAG_LAYER: u64 = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct Board {
    pub screen: ScreenGeometry,
    pub style: SceneStyle,
    pub deck: SlideDeck,
    pub frame_id: u64,
    pub dashboard: Dashboard,
    pub role_play: bool,
    layers: Vec<Layer>,
    next_id: u64,
    pens: BTreeMap<String, PenState>,
}

impl Board {
    pub fn new(screen: ScreenGeometry, style: SceneStyle, deck: SlideDeck) -> Board {
        let mut board = Board {
            screen,
            style,
            deck,
            frame_id: 0,
            dashboard: Dashboard::default(),
            role_play: false,
            layers: Vec::new(),
            next_id: 1,
            pens: BTreeMap::new(),
        };
        let slide = board.add_layer(LayerPayload::Slide, Visibility::BOTH);
        let tags = board.add_layer(LayerPayload::Tags, Visibility::BACK_ONLY);
        debug_assert_eq!((slide, tags), (SLIDE_LAYER, TAG_LAYER));
        board
    }

    /// A board with no slide content, tags or strokes.
    pub fn empty(screen: ScreenGeometry) -> Board {
        Board::new(screen, SceneStyle::default(), SlideDeck::default())
    }

    pub fn add_layer(&mut self, payload: LayerPayload, visibility: Visibility) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        let kind = payload.kind();
        self.layers.push(Layer { id, kind, z_order: kind.default_z(), visibility, payload });
        id
    }

    pub fn layer(&self, id: u64) -> Option<&Layer> {
        self.layers.iter().find(|l| l.id == id)
    }

    pub fn layer_mut(&mut self, id: u64) -> Option<&mut Layer> {
        self.layers.iter_mut().find(|l| l.id == id)
    }

    pub fn remove_layer(&mut self, id: u64) -> Option<Layer> {
        let idx = self.layers.iter().position(|l| l.id == id)?;
        Some(self.layers.remove(idx))
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Layers sorted by `(z_order, id)`.
    pub fn layers_in_order(&self) -> Vec<&Layer> {
        let mut v: Vec<&Layer> = self.layers.iter().collect();
        v.sort_by_key(|l| (l.z_order, l.id));
        v
    }

    pub fn layers_of(&self, kind: LayerKind) -> impl Iterator<Item = &Layer> {
        self.layers.iter().filter(move |l| l.kind == kind)
    }

    fn afterimage_ranks(&self) -> BTreeMap<u64, usize> {
        let mut ids: Vec<u64> = self.layers_of(LayerKind::Afterimage).map(|l| l.id).collect();
        ids.sort_unstable_by(|a, b| b.cmp(a));
        ids.into_iter().enumerate().map(|(rank, id)| (id, rank)).collect()
    }

    /// Afterimage opacities, newest first.
    pub fn afterimage_opacities(&self) -> Vec<f64> {
        let n = self.layers_of(LayerKind::Afterimage).count();
        (0..n).map(|r| self.style.afterimage_opacity(r)).collect()
    }

    pub fn navigate(&mut self, direction: Direction) -> Navigation {
        self.deck.navigate(direction)
    }

    /// Puts `device_id` into writing mode; strokes it draws are authored on `side`.
    pub fn begin_stroke(&mut self, device_id: &str, side: Side) {
        self.pens.insert(device_id.to_string(), PenState { side, points: Vec::new(), layer: None });
    }

    /// Leaves writing mode. Returns the committed stroke layer, if any.
    pub fn end_stroke(&mut self, device_id: &str) -> Option<u64> {
        self.pens.remove(device_id).and_then(|p| p.layer)
    }

    pub fn is_writing(&self, device_id: &str) -> bool {
        self.pens.contains_key(device_id)
    }

    /// Drops the device position onto the board and extends its active stroke.
    ///
    /// Returns the stroke layer id once the stroke has two points.
    pub fn add_stroke_point(&mut self, device: &Pose) -> Result<Option<u64>, SceneError> {
        let screen = self.screen;
        let (inconspicuous, conspicuous) = (self.style.inconspicuous_color, self.style.conspicuous_color);
        let pen = self
            .pens
            .get_mut(&device.device_id)
            .ok_or_else(|| SceneError::NotInWritingMode(device.device_id.clone()))?;
        let sp = drop_to_plane(device.position, &screen);
        if pen.points.last().is_some_and(|last| last.u == sp.u && last.v == sp.v) {
            return Ok(pen.layer);
        }
        pen.points.push(sp);
        if pen.points.len() < 2 {
            return Ok(None);
        }
        let (color_front, color_back) = match pen.side {
            Side::Back => (conspicuous, inconspicuous),
            Side::Front => (inconspicuous, conspicuous),
        };
        let stroke = Stroke { points: pen.points.clone(), author_side: pen.side, color_front, color_back };
        let existing = pen.layer;
        let id = match existing {
            Some(id) => {
                if let Some(layer) = self.layer_mut(id) {
                    layer.payload = LayerPayload::Stroke(stroke);
                }
                id
            }
            None => {
                let id = self.add_layer(LayerPayload::Stroke(stroke), Visibility::BOTH);
                if let Some(pen) = self.pens.get_mut(&device.device_id) {
                    pen.layer = Some(id);
                }
                id
            }
        };
        Ok(Some(id))
    }

    /// Removes every stroke layer and resets active pens.
    pub fn clear_strokes(&mut self) {
        self.layers.retain(|l| l.kind != LayerKind::Stroke);
        for pen in self.pens.values_mut() {
            pen.points.clear();
            pen.layer = None;
        }
    }

    /// Shows or hides the live avatar layer.
    pub fn set_role_play(&mut self, active: bool) {
        self.role_play = active;
        if !active {
            let ids: Vec<u64> = self.layers_of(LayerKind::Avatar).map(|l| l.id).collect();
            for id in ids {
                self.remove_layer(id);
            }
        }
    }

    pub fn set_avatar(&mut self, avatar: AvatarPose) -> Result<u64, SceneError> {
        if !self.role_play {
            return Err(SceneError::RolePlayInactive);
        }
        if let Some(layer) = self.layers.iter_mut().find(|l| l.kind == LayerKind::Avatar) {
            layer.payload = LayerPayload::Avatar(avatar);
            return Ok(layer.id);
        }
        Ok(self.add_layer(LayerPayload::Avatar(avatar), Visibility::BOTH))
    }

    pub fn avatar(&self) -> Option<&AvatarPose> {
        self.layers.iter().find_map(|l| match &l.payload {
            LayerPayload::Avatar(a) => Some(a),
            _ => None,
        })
    }

    /// Appends an immutable snapshot of `avatar` as a new afterimage layer.
    pub fn freeze_afterimage(&mut self, avatar: &AvatarPose, now_us: i64) -> Result<u64, SceneError> {
        if !self.role_play {
            return Err(SceneError::RolePlayInactive);
        }
        Ok(self.add_layer(
            LayerPayload::Afterimage { avatar: avatar.clone(), frozen_at_us: now_us },
            Visibility::BOTH,
        ))
    }

    pub fn clear_afterimages(&mut self) {
        self.layers.retain(|l| l.kind != LayerKind::Afterimage);
    }

    /// Rebuilds the name tags for `students` as seen from `teacher_eye`.
    ///
    /// Tags are placed in student-id order; a tag overlapping an earlier one
    /// moves up by one tag height until it is clear. Praise counts carry over.
    pub fn update_dashboard(&mut self, students: &[StudentInfo], teacher_eye: &Viewer) -> Result<(), SceneError> {
        if teacher_eye.side != Side::Back || teacher_eye.eye.z >= 0.0 {
            return Err(SceneError::TeacherEyeNotBack);
        }
        let mut sorted: Vec<&StudentInfo> = students.iter().collect();
        sorted.sort_by(|a, b| a.id.cmp(&b.id));
        let (w, h) = (self.style.tag_width, self.style.tag_height);
        let mut tags: Vec<NameTag> = Vec::with_capacity(sorted.len());
        for s in sorted {
            let anchor = s.head_pos + Vec3::new(0.0, self.style.tag_offset, 0.0);
            let mut center = project_point(teacher_eye, anchor, &self.screen)
                .map_err(|source| SceneError::Projection { layer: TAG_LAYER, source })?;
            while tags
                .iter()
                .any(|t| (t.center.u - center.u).abs() < w && (t.center.v - center.v).abs() < h)
            {
                center = self.screen.point(center.u, center.v + h);
            }
            let praise_count = self
                .dashboard
                .tags
                .iter()
                .find(|t| t.student_id == s.id)
                .map_or(0, |t| t.praise_count);
            tags.push(NameTag {
                student_id: s.id.clone(),
                name: s.name.clone(),
                center,
                metrics: s.metrics.clone(),
                praise_count,
            });
        }
        self.dashboard.tags = tags;
        Ok(())
    }

    /// Praises the student whose tag center is nearest the click, within `radius`.
    /// Equidistant tags resolve to the lower student id.
    pub fn apply_praise(&mut self, click: ScreenPoint, radius: f64, now_us: i64) -> Option<PraiseGiven> {
        let mut best: Option<(usize, f64)> = None;
        for (i, tag) in self.dashboard.tags.iter().enumerate() {
            let d = tag.center.distance(&click);
            if d > radius {
                continue;
            }
            let better = match best {
                None => true,
                Some((bi, bd)) => d < bd || (d == bd && tag.student_id < self.dashboard.tags[bi].student_id),
            };
            if better {
                best = Some((i, d));
            }
        }
        let (i, _) = best?;
        let tag = &mut self.dashboard.tags[i];
        tag.praise_count += 1;
        Some(PraiseGiven { student_id: tag.student_id.clone(), timestamp_us: now_us, praise_count: tag.praise_count })
    }

    /// Creates or replaces the single object layer tagged by `slot`.
    pub fn set_object(&mut self, slot: &mut Option<u64>, object: Option<SceneObject>) {
        match (object, *slot) {
            (Some(obj), Some(id)) => {
                if let Some(layer) = self.layer_mut(id) {
                    layer.payload = LayerPayload::Object(obj);
                } else {
                    *slot = Some(self.add_layer(LayerPayload::Object(obj), Visibility::BOTH));
                }
            }
            (Some(obj), None) => *slot = Some(self.add_layer(LayerPayload::Object(obj), Visibility::BOTH)),
            (None, Some(id)) => {
                self.remove_layer(id);
                *slot = None;
            }
            (None, None) => {}
        }
    }
}
