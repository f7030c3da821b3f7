//! Pinhole camera model, axis-angle rotations and point projection.
//!
//! A camera motion `(rotvec, t)` places the camera at `t` with orientation
//! `R = exp(rotvec^)`. A point `P` expressed in the reference frame lands at
//! camera coordinates `R^T (P - t)`; its depth is the third coordinate and its
//! continuous pixel position follows from the intrinsic matrix `K`.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub type Point3 = nalgebra::Point3<f64>;
pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Points whose depth does not exceed this many meters are behind the camera.
pub const DEPTH_EPSILON: f64 = 1e-6;

/// Below this angle the Rodrigues formula is replaced by its Taylor expansion.
const SMALL_ANGLE: f64 = 1e-6;

/// Pinhole intrinsics with an explicit image grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        let k = Self { fx, fy, cx, cy, width, height };
        k.validate()?;
        Ok(k)
    }

    /// Low-resolution evaluation camera: focal length 386.274 px on a
    /// 160x90 grid with the principal point at the image center.
    pub fn evaluation_default() -> Self {
        Self { fx: 386.274, fy: 386.274, cx: 80.0, cy: 45.0, width: 160, height: 90 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx.is_finite() && self.fx > 0.0 && self.fy.is_finite() && self.fy > 0.0) {
            return Err(Error::invalid(format!("focal lengths must be positive, got fx={} fy={}", self.fx, self.fy)));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("image grid must be at least 1x1"));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64) {
            return Err(Error::invalid(format!("cx={} outside [0, {})", self.cx, self.width)));
        }
        if !(self.cy >= 0.0 && self.cy < self.height as f64) {
            return Err(Error::invalid(format!("cy={} outside [0, {})", self.cy, self.height)));
        }
        Ok(())
    }

    pub fn matrix(&self) -> Mat3 {
        Mat3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }
}

/// Six-DoF camera motion: axis-angle rotation vector (radians) and
/// translation (meters).
///
/// The rotation angle is kept in `[0, pi]`; larger angles are folded onto the
/// equivalent rotation about the opposite axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MotionRepr", into = "MotionRepr")]
pub struct MotionParams {
    rotvec: Vec3,
    translation: Vec3,
}

#[derive(Serialize, Deserialize)]
struct MotionRepr {
    rotvec: [f64; 3],
    translation: [f64; 3],
}

impl TryFrom<MotionRepr> for MotionParams {
    type Error = Error;

    fn try_from(r: MotionRepr) -> Result<Self> {
        MotionParams::new(Vec3::from(r.rotvec), Vec3::from(r.translation))
    }
}

impl From<MotionParams> for MotionRepr {
    fn from(m: MotionParams) -> Self {
        MotionRepr { rotvec: m.rotvec.into(), translation: m.translation.into() }
    }
}

impl Default for MotionParams {
    fn default() -> Self {
        Self::identity()
    }
}

impl MotionParams {
    pub fn new(rotvec: Vec3, translation: Vec3) -> Result<Self> {
        if !rotvec.iter().chain(translation.iter()).all(|v| v.is_finite()) {
            return Err(Error::invalid("motion parameters must be finite"));
        }
        Ok(Self { rotvec: canonical_rotvec(rotvec), translation })
    }

    pub fn identity() -> Self {
        Self { rotvec: Vec3::zeros(), translation: Vec3::zeros() }
    }

    /// Caller guarantees finite components.
    pub(crate) fn from_parts(rotvec: Vec3, translation: Vec3) -> Self {
        debug_assert!(rotvec.iter().chain(translation.iter()).all(|v| v.is_finite()));
        Self { rotvec: canonical_rotvec(rotvec), translation }
    }

    pub fn from_translation(t: Vec3) -> Result<Self> {
        Self::new(Vec3::zeros(), t)
    }

    pub fn from_rotvec(rotvec: Vec3) -> Result<Self> {
        Self::new(rotvec, Vec3::zeros())
    }

    /// Builds a motion from a rotation matrix, which must be orthonormal.
    pub fn from_rotation(rotation: &Mat3, translation: Vec3) -> Result<Self> {
        Self::new(axis_angle_from_rotation(rotation), translation)
    }

    pub fn rotvec(&self) -> Vec3 {
        self.rotvec
    }

    pub fn translation(&self) -> Vec3 {
        self.translation
    }

    pub fn angle(&self) -> f64 {
        self.rotvec.norm()
    }

    pub fn rotation(&self) -> Mat3 {
        rodrigues(&self.rotvec)
    }

    pub fn is_identity(&self) -> bool {
        self.rotvec == Vec3::zeros() && self.translation == Vec3::zeros()
    }
}

fn canonical_rotvec(rotvec: Vec3) -> Vec3 {
    let theta = rotvec.norm();
    if theta <= PI {
        return rotvec;
    }
    let axis = rotvec / theta;
    let wrapped = theta.rem_euclid(2.0 * PI);
    if wrapped > PI {
        -axis * (2.0 * PI - wrapped)
    } else {
        axis * wrapped
    }
}

/// Rodrigues' formula `R = exp(rotvec^)`.
pub fn rotation_from_axis_angle(rotvec: &Vec3) -> Result<Mat3> {
    if !rotvec.iter().all(|v| v.is_finite()) {
        return Err(Error::invalid("rotation vector must be finite"));
    }
    Ok(rodrigues(rotvec))
}

fn rodrigues(rotvec: &Vec3) -> Mat3 {
    let theta = rotvec.norm();
    let k = rotvec.cross_matrix();
    if theta < SMALL_ANGLE {
        return Mat3::identity() + k + k * k * 0.5;
    }
    let (s, c) = theta.sin_cos();
    Mat3::identity() + k * (s / theta) + k * k * ((1.0 - c) / (theta * theta))
}

/// Inverse of [`rotation_from_axis_angle`], returning an angle in `[0, pi]`.
pub fn axis_angle_from_rotation(rotation: &Mat3) -> Vec3 {
    let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*rotation));
    let mut w = q.w;
    let mut v = q.imag();
    if w < 0.0 {
        w = -w;
        v = -v;
    }
    let s = v.norm();
    if s < 1e-300 {
        return Vec3::zeros();
    }
    let theta = 2.0 * s.atan2(w);
    v * (theta / s)
}

/// Precomputed world-to-pixel mapping for one camera motion.
#[derive(Debug, Clone, Copy)]
pub struct Projector {
    rot_t: Mat3,
    translation: Vec3,
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
}

impl Projector {
    pub fn new(motion: &MotionParams, intrinsics: &CameraIntrinsics) -> Self {
        Self {
            rot_t: motion.rotation().transpose(),
            translation: motion.translation(),
            fx: intrinsics.fx,
            fy: intrinsics.fy,
            cx: intrinsics.cx,
            cy: intrinsics.cy,
        }
    }

    /// `R^T (P - t)`.
    #[inline]
    pub fn camera_coords(&self, p: &Point3) -> Vec3 {
        self.rot_t * (p.coords - self.translation)
    }

    /// Continuous pixel coordinates `(u, v)` and depth. Only meaningful when
    /// the depth exceeds [`DEPTH_EPSILON`].
    #[inline]
    pub fn project(&self, p: &Point3) -> (f64, f64, f64) {
        let c = self.camera_coords(p);
        let (u, v) = self.pixel(&c);
        (u, v, c.z)
    }

    /// Continuous pixel coordinates of a point already in camera coordinates.
    #[inline]
    pub fn pixel(&self, c: &Vec3) -> (f64, f64) {
        let inv_z = 1.0 / c.z;
        (self.fx * c.x * inv_z + self.cx, self.fy * c.y * inv_z + self.cy)
    }
}

/// Pixel position and depth of `p` seen from a camera moved by `motion`.
pub fn project_point(p: &Point3, motion: &MotionParams, intrinsics: &CameraIntrinsics) -> Result<(Vector2<f64>, f64)> {
    let (u, v, depth) = Projector::new(motion, intrinsics).project(p);
    if !(depth > DEPTH_EPSILON) {
        return Err(Error::BehindCamera { depth });
    }
    Ok((Vector2::new(u, v), depth))
}

/// Depth `[0, 0, 1] R^T (P - t)` without the front-of-camera check.
pub fn depth(p: &Point3, motion: &MotionParams) -> f64 {
    let r = motion.rotation();
    r.column(2).dot(&(p.coords - motion.translation()))
}
