//! Display-list primitives and the double-sided compose pass.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Board, Layer, LayerPayload, SceneError, SceneObject};
use crate::geometry::{project_point, projection_scale, ScreenGeometry, Side, Vec3, Viewer};
use crate::scene::ItemKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Rgba(pub [u8; 4]);

impl Rgba {
    pub const INCONSPICUOUS_GRAY: Rgba = Rgba([64, 64, 64, 255]);
    pub const CONSPICUOUS_YELLOW: Rgba = Rgba([255, 255, 0, 255]);
    pub const WHITE: Rgba = Rgba([255, 255, 255, 255]);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Primitive {
    GlyphRun {
        layer: u64,
        text: String,
        u: f64,
        v: f64,
        width: f64,
        height: f64,
        color: Rgba,
        mirrored: bool,
    },
    Polyline {
        layer: u64,
        points: Vec<[f64; 2]>,
        color: Rgba,
        width: f64,
        opacity: f64,
    },
    Sprite {
        layer: u64,
        sprite: String,
        u: f64,
        v: f64,
        width: f64,
        height: f64,
        opacity: f64,
    },
    Tag {
        layer: u64,
        student_id: String,
        name: String,
        u: f64,
        v: f64,
        width: f64,
        height: f64,
        lines: Vec<String>,
        praise_count: u32,
    },
}

impl Primitive {
    /// Every anchor coordinate the primitive carries, as `(u, v)` pairs.
    pub fn coordinates(&self) -> Vec<(f64, f64)> {
        match self {
            Primitive::GlyphRun { u, v, .. }
            | Primitive::Sprite { u, v, .. }
            | Primitive::Tag { u, v, .. } => vec![(*u, *v)],
            Primitive::Polyline { points, .. } => points.iter().map(|p| (p[0], p[1])).collect(),
        }
    }

    fn mirrored(&self) -> Primitive {
        let mut p = self.clone();
        match &mut p {
            Primitive::GlyphRun { u, mirrored, .. } => {
                *u = -*u;
                *mirrored = !*mirrored;
            }
            Primitive::Sprite { u, .. } | Primitive::Tag { u, .. } => *u = -*u,
            Primitive::Polyline { points, .. } => points.iter_mut().for_each(|pt| pt[0] = -pt[0]),
        }
        p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisplayList {
    pub side: Side,
    pub frame_id: u64,
    pub primitives: Vec<Primitive>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisplayPair {
    pub front: DisplayList,
    pub back: DisplayList,
}

impl DisplayPair {
    /// Content hash of both lists' primitives over their canonical JSON
    /// encoding. The frame id is left out so an unchanged board keeps its digest.
    pub fn digest(&self) -> String {
        let value = serde_json::json!({
            "back": &self.back.primitives,
            "front": &self.front.primitives,
        });
        let mut hasher = Sha256::new();
        hasher.update(value.to_string().as_bytes());
        hex::encode(hasher.finalize())
    }

    pub fn get(&self, side: Side) -> &DisplayList {
        match side {
            Side::Front => &self.front,
            Side::Back => &self.back,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewerPair {
    pub front: Viewer,
    pub back: Viewer,
}

impl ViewerPair {
    pub fn get(&self, side: Side) -> &Viewer {
        match side {
            Side::Front => &self.front,
            Side::Back => &self.back,
        }
    }
}

/// Renders both sides, failing on the first layer that cannot be projected.
pub fn compose_display_lists(board: &Board, viewers: &ViewerPair) -> Result<DisplayPair, SceneError> {
    let (pair, mut errors) = compose_inner(board, viewers, true);
    match errors.pop() {
        Some(e) => Err(e),
        None => Ok(pair),
    }
}

/// Renders both sides, skipping layers that fail and returning their errors.
pub fn compose_lenient(board: &Board, viewers: &ViewerPair) -> (DisplayPair, Vec<SceneError>) {
    compose_inner(board, viewers, false)
}

fn compose_inner(board: &Board, viewers: &ViewerPair, stop_on_error: bool) -> (DisplayPair, Vec<SceneError>) {
    let mut front = Vec::new();
    let mut back = Vec::new();
    let mut errors = Vec::new();
    let ctx = Ctx { screen: &board.screen, margin: board.style.clip_margin };

    let afterimage_ranks = board.afterimage_ranks();
    for layer in board.layers_in_order() {
        let result = render_layer(board, layer, viewers, &ctx, &afterimage_ranks);
        match result {
            Ok((f, b)) => {
                if layer.visibility.front {
                    front.extend(f);
                }
                if layer.visibility.back {
                    back.extend(b);
                }
            }
            Err(source) => {
                errors.push(SceneError::Projection { layer: layer.id, source });
                if stop_on_error {
                    break;
                }
            }
        }
    }
    let frame_id = board.frame_id;
    (
        DisplayPair {
            front: DisplayList { side: Side::Front, frame_id, primitives: front },
            back: DisplayList { side: Side::Back, frame_id, primitives: back },
        },
        errors,
    )
}

struct Ctx<'a> {
    screen: &'a ScreenGeometry,
    margin: f64,
}

impl Ctx<'_> {
    fn keeps(&self, u: f64, v: f64) -> bool {
        u.is_finite() && v.is_finite() && self.screen.contains_with_margin(u, v, self.margin)
    }

    fn bounds(&self) -> (f64, f64) {
        (self.screen.width / 2.0 + self.margin, self.screen.height / 2.0 + self.margin)
    }
}

type SidePrims = (Vec<Primitive>, Vec<Primitive>);
type ProjResult<T> = Result<T, crate::geometry::GeometryError>;

fn render_layer(
    board: &Board,
    layer: &Layer,
    viewers: &ViewerPair,
    ctx: &Ctx,
    afterimage_ranks: &std::collections::BTreeMap<u64, usize>,
) -> ProjResult<SidePrims> {
    let style = &board.style;
    match &layer.payload {
        LayerPayload::Slide => per_side(viewers, |viewer| {
            let mut out = Vec::new();
            for item in &board.deck.current().items {
                let sp = project_point(viewer, item.position, ctx.screen)?;
                let scale = projection_scale(viewer, item.position)?.abs();
                if !ctx.keeps(sp.u, sp.v) {
                    continue;
                }
                let (width, height) = (item.size[0] * scale, item.size[1] * scale);
                out.push(match item.kind {
                    ItemKind::Text => Primitive::GlyphRun {
                        layer: layer.id,
                        text: item.text.clone().unwrap_or_default(),
                        u: sp.u,
                        v: sp.v,
                        width,
                        height,
                        color: style.text_color,
                        mirrored: false,
                    },
                    ItemKind::Sprite => Primitive::Sprite {
                        layer: layer.id,
                        sprite: item.sprite.clone().unwrap_or_default(),
                        u: sp.u,
                        v: sp.v,
                        width,
                        height,
                        opacity: 1.0,
                    },
                });
            }
            Ok(out)
        }),
        LayerPayload::Stroke(stroke) => {
            let pts: Vec<[f64; 2]> = stroke.points.iter().map(|p| [p.u, p.v]).collect();
            let author_color = stroke.color_on(stroke.author_side);
            let mirror_color = stroke.color_on(stroke.author_side.opposite());
            let authored: Vec<Primitive> = clip_polyline(&pts, ctx.bounds())
                .into_iter()
                .map(|points| Primitive::Polyline {
                    layer: layer.id,
                    points,
                    color: author_color,
                    width: style.stroke_width,
                    opacity: 1.0,
                })
                .collect();
            let mirrored: Vec<Primitive> = authored
                .iter()
                .map(|p| match p.mirrored() {
                    Primitive::Polyline { layer, points, width, opacity, .. } => {
                        Primitive::Polyline { layer, points, color: mirror_color, width, opacity }
                    }
                    other => other,
                })
                .collect();
            Ok(match stroke.author_side {
                Side::Back => (mirrored, authored),
                Side::Front => (authored, mirrored),
            })
        }
        LayerPayload::Avatar(avatar) => per_side(viewers, |viewer| {
            bones(layer.id, avatar, viewer, ctx, style.avatar_color, 1.0, style.bone_width)
        }),
        LayerPayload::Afterimage { avatar, .. } => {
            let rank = afterimage_ranks.get(&layer.id).copied().unwrap_or(0);
            let opacity = style.afterimage_opacity(rank);
            per_side(viewers, |viewer| {
                bones(layer.id, avatar, viewer, ctx, style.afterimage_color, opacity, style.bone_width)
            })
        }
        LayerPayload::Tags => {
            let prims: Vec<Primitive> = board
                .dashboard
                .tags
                .iter()
                .filter(|t| ctx.keeps(t.center.u, t.center.v))
                .map(|t| Primitive::Tag {
                    layer: layer.id,
                    student_id: t.student_id.clone(),
                    name: t.name.clone(),
                    u: t.center.u,
                    v: t.center.v,
                    width: style.tag_width,
                    height: style.tag_height,
                    lines: t.lines(),
                    praise_count: t.praise_count,
                })
                .collect();
            Ok((prims.clone(), prims))
        }
        LayerPayload::Object(SceneObject::Ball { position, radius }) => per_side(viewers, |viewer| {
            let sp = project_point(viewer, *position, ctx.screen)?;
            let scale = projection_scale(viewer, *position)?.abs();
            if !ctx.keeps(sp.u, sp.v) {
                return Ok(vec![]);
            }
            Ok(vec![Primitive::Sprite {
                layer: layer.id,
                sprite: "ball".into(),
                u: sp.u,
                v: sp.v,
                width: 2.0 * radius * scale,
                height: 2.0 * radius * scale,
                opacity: 1.0,
            }])
        }),
        LayerPayload::Object(SceneObject::Extrusion { cells, cell_width, cell_height, max_depth }) => {
            per_side(viewers, |viewer| {
                let mut out = Vec::new();
                for cell in cells {
                    let p = Vec3::new(cell.u, cell.v, -cell.depth);
                    let sp = project_point(viewer, p, ctx.screen)?;
                    let scale = projection_scale(viewer, p)?.abs();
                    if !ctx.keeps(sp.u, sp.v) {
                        continue;
                    }
                    out.push(Primitive::Sprite {
                        layer: layer.id,
                        sprite: "extrusion".into(),
                        u: sp.u,
                        v: sp.v,
                        width: cell_width * scale,
                        height: cell_height * scale,
                        opacity: if *max_depth > 0.0 { (cell.depth / max_depth).clamp(0.0, 1.0) } else { 1.0 },
                    });
                }
                Ok(out)
            })
        }
        LayerPayload::MediaPlaceholder { label, center, width, height } => {
            if !ctx.keeps(center[0], center[1]) {
                return Ok((vec![], vec![]));
            }
            let p = Primitive::Sprite {
                layer: layer.id,
                sprite: format!("placeholder:{label}"),
                u: center[0],
                v: center[1],
                width: *width,
                height: *height,
                opacity: 1.0,
            };
            Ok((vec![p.clone()], vec![p]))
        }
    }
}

fn per_side(
    viewers: &ViewerPair,
    mut f: impl FnMut(&Viewer) -> ProjResult<Vec<Primitive>>,
) -> ProjResult<SidePrims> {
    Ok((f(&viewers.front)?, f(&viewers.back)?))
}

fn bones(
    layer: u64,
    avatar: &crate::tracking::AvatarPose,
    viewer: &Viewer,
    ctx: &Ctx,
    color: Rgba,
    opacity: f64,
    width: f64,
) -> ProjResult<Vec<Primitive>> {
    let mut out = Vec::new();
    for (a, b) in avatar.bones() {
        let pa = project_point(viewer, a, ctx.screen)?;
        let pb = project_point(viewer, b, ctx.screen)?;
        for points in clip_polyline(&[[pa.u, pa.v], [pb.u, pb.v]], ctx.bounds()) {
            out.push(Primitive::Polyline { layer, points, color, width, opacity });
        }
    }
    Ok(out)
}

/// Clips a polyline to `|u| <= half_w`, `|v| <= half_h`, splitting it where
/// it leaves the rectangle. Runs shorter than two points are dropped.
pub fn clip_polyline(points: &[[f64; 2]], (half_w, half_h): (f64, f64)) -> Vec<Vec<[f64; 2]>> {
    let mut runs: Vec<Vec<[f64; 2]>> = Vec::new();
    let mut current: Vec<[f64; 2]> = Vec::new();
    for seg in points.windows(2) {
        match clip_segment(seg[0], seg[1], half_w, half_h) {
            Some((a, b)) => {
                if current.last() != Some(&a) {
                    if current.len() >= 2 {
                        runs.push(std::mem::take(&mut current));
                    }
                    current.clear();
                    current.push(a);
                }
                current.push(b);
            }
            None => {
                if current.len() >= 2 {
                    runs.push(std::mem::take(&mut current));
                }
                current.clear();
            }
        }
    }
    if current.len() >= 2 {
        runs.push(current);
    }
    runs
}

// Liang–Barsky.
fn clip_segment(a: [f64; 2], b: [f64; 2], half_w: f64, half_h: f64) -> Option<([f64; 2], [f64; 2])> {
    if !(a.iter().chain(b.iter()).all(|c| c.is_finite())) {
        return None;
    }
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let mut t0 = 0.0f64;
    let mut t1 = 1.0f64;
    for (p, q) in [
        (-dx, a[0] + half_w),
        (dx, half_w - a[0]),
        (-dy, a[1] + half_h),
        (dy, half_h - a[1]),
    ] {
        if p == 0.0 {
            if q < 0.0 {
                return None;
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                t0 = t0.max(r);
            } else {
                t1 = t1.min(r);
            }
        }
    }
    if t0 > t1 {
        return None;
    }
    let at = |t: f64| {
        if t == 0.0 {
            a
        } else if t == 1.0 {
            b
        } else {
            [
                (a[0] + t * dx).clamp(-half_w, half_w),
                (a[1] + t * dy).clamp(-half_h, half_h),
            ]
        }
    };
    Some((at(t0), at(t1)))
}
