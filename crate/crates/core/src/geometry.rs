//! Classroom frame, the board plane and viewer-dependent projection.
//!
//! The classroom frame has its origin at the screen center, `y` up and `z`
//! pointing toward the audience. The board occupies the plane `z = 0`; the
//! audience sits in `z > 0` (front) and the presenter stage is `z < 0` (back).

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Below this separation between eye and content depth a projection is rejected.
pub const PROJECTION_EPSILON: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("degenerate projection: eye z {eye_z} and point z {point_z} are within {PROJECTION_EPSILON} m")]
    DegenerateProjection { eye_z: f64, point_z: f64 },
    #[error("viewer eye must be off the plane and on its declared side (eye z = {0})")]
    InvalidViewer(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn distance(self, o: Vec3) -> f64 {
        (self - o).norm()
    }

    /// Unit vector, or `None` for (near-)zero vectors.
    pub fn normalized(self) -> Option<Vec3> {
        let n = self.norm();
        (n > 1e-12 && n.is_finite()).then(|| self * (1.0 / n))
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn lerp(self, o: Vec3, t: f64) -> Vec3 {
        self + (o - self) * t
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Unit quaternion `(w, x, y, z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Default for Quat {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Quat {
    pub const IDENTITY: Quat = Quat { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    pub fn norm(self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn is_unit(self) -> bool {
        (self.norm() - 1.0).abs() <= 1e-6
    }

    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Quat {
        let a = axis.normalized().unwrap_or(Vec3::new(0.0, 1.0, 0.0));
        let (s, c) = (angle * 0.5).sin_cos();
        Quat { w: c, x: a.x * s, y: a.y * s, z: a.z * s }
    }

    pub fn rotate(self, v: Vec3) -> Vec3 {
        // v' = v + 2w(q × v) + 2 q × (q × v)
        let q = Vec3::new(self.x, self.y, self.z);
        let t = q.cross(v) * 2.0;
        v + t * self.w + q.cross(t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Front,
    Back,
}

impl Side {
    /// Side of the half-space containing `z`; the plane itself counts as front.
    pub fn of_z(z: f64) -> Side {
        if z >= 0.0 {
            Side::Front
        } else {
            Side::Back
        }
    }

    pub fn opposite(self) -> Side {
        match self {
            Side::Front => Side::Back,
            Side::Back => Side::Front,
        }
    }

    /// +1 for front, -1 for back.
    pub fn sign(self) -> f64 {
        match self {
            Side::Front => 1.0,
            Side::Back => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScreenGeometry {
    pub width: f64,
    pub height: f64,
}

impl Default for ScreenGeometry {
    fn default() -> Self {
        Self { width: 4.0, height: 3.0 }
    }
}

impl ScreenGeometry {
    pub fn contains(&self, u: f64, v: f64) -> bool {
        u.abs() <= self.width / 2.0 && v.abs() <= self.height / 2.0
    }

    pub fn contains_with_margin(&self, u: f64, v: f64, margin: f64) -> bool {
        u.abs() <= self.width / 2.0 + margin && v.abs() <= self.height / 2.0 + margin
    }

    pub fn point(&self, u: f64, v: f64) -> ScreenPoint {
        ScreenPoint { u, v, on_screen: self.contains(u, v) }
    }
}

/// A position on the board, `u` rightward as seen from the front, `v` up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScreenPoint {
    pub u: f64,
    pub v: f64,
    pub on_screen: bool,
}

impl ScreenPoint {
    pub fn distance(&self, o: &ScreenPoint) -> f64 {
        ((self.u - o.u).powi(2) + (self.v - o.v).powi(2)).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Viewer {
    pub eye: Vec3,
    pub side: Side,
}

impl Viewer {
    /// Builds a viewer, checking the eye is off the plane on the named side.
    pub fn new(eye: Vec3, side: Side) -> Result<Viewer, GeometryError> {
        if !eye.is_finite() || eye.z == 0.0 || Side::of_z(eye.z) != side {
            return Err(GeometryError::InvalidViewer(eye.z));
        }
        Ok(Viewer { eye, side })
    }

    /// Viewer whose side is taken from the sign of `eye.z`.
    pub fn at(eye: Vec3) -> Result<Viewer, GeometryError> {
        Viewer::new(eye, Side::of_z(eye.z))
    }
}

/// Configured best viewing spots for each side of the board.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewerSpots {
    #[serde(default = "default_front_eye")]
    pub front: Vec3,
    #[serde(default = "default_back_eye")]
    pub back: Vec3,
}

fn default_front_eye() -> Vec3 {
    Vec3::new(0.0, 1.2, 5.0)
}

fn default_back_eye() -> Vec3 {
    Vec3::new(0.0, 1.6, -2.0)
}

impl Default for ViewerSpots {
    fn default() -> Self {
        Self { front: default_front_eye(), back: default_back_eye() }
    }
}

/// The fixed best-spot viewer for `side`, taken verbatim from `spots`.
pub fn default_viewer(side: Side, spots: &ViewerSpots) -> Viewer {
    let eye = match side {
        Side::Front => spots.front,
        Side::Back => spots.back,
    };
    Viewer { eye, side }
}

/// Where on the board `p` must be drawn so that `viewer` perceives it at `p`.
///
/// Intersects the ray from the eye through `p` with the plane `z = 0`.
pub fn project_point(
    viewer: &Viewer,
    p: Vec3,
    screen: &ScreenGeometry,
) -> Result<ScreenPoint, GeometryError> {
    let eye = viewer.eye;
    let dz = eye.z - p.z;
    if !(dz.abs() > PROJECTION_EPSILON) {
        return Err(GeometryError::DegenerateProjection { eye_z: eye.z, point_z: p.z });
    }
    let t = eye.z / dz;
    let u = eye.x + t * (p.x - eye.x);
    let v = eye.y + t * (p.y - eye.y);
    if !(t.is_finite() && u.is_finite() && v.is_finite()) {
        return Err(GeometryError::DegenerateProjection { eye_z: eye.z, point_z: p.z });
    }
    Ok(screen.point(u, v))
}

/// Ratio by which a small object at `p` shrinks when drawn on the board for `viewer`.
pub fn projection_scale(viewer: &Viewer, p: Vec3) -> Result<f64, GeometryError> {
    let dz = viewer.eye.z - p.z;
    if !(dz.abs() > PROJECTION_EPSILON) {
        return Err(GeometryError::DegenerateProjection { eye_z: viewer.eye.z, point_z: p.z });
    }
    Ok(viewer.eye.z / dz)
}

/// Text-reversal mirror about the vertical center line.
pub fn mirror_u(sp: ScreenPoint) -> ScreenPoint {
    ScreenPoint { u: -sp.u, ..sp }
}

/// Orthogonal drop of a 3D point onto the board plane.
pub fn drop_to_plane(p: Vec3, screen: &ScreenGeometry) -> ScreenPoint {
    screen.point(p.x, p.y)
}
