//! Rigid poses and small shared value types.

use nalgebra::{Point3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

pub type Vec3 = Vector3<f64>;

/// Rigid transform from a local frame into the world frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vec3,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    /// Pose of a camera at `eye` looking at `target`, using the optical
    /// convention: local +z forward, +x right, +y down.
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3) -> Self {
        let forward = (target - eye).normalize();
        let right = forward.cross(&up).normalize();
        let down = forward.cross(&right);
        let basis = nalgebra::Matrix3::from_columns(&[right, down, forward]);
        let rot = nalgebra::Rotation3::from_matrix_unchecked(basis);
        Self {
            rotation: UnitQuaternion::from_rotation_matrix(&rot),
            translation: eye,
        }
    }

    pub fn transform_point(&self, local: &Vec3) -> Vec3 {
        self.rotation * local + self.translation
    }

    pub fn inverse_transform_point(&self, world: &Vec3) -> Vec3 {
        self.rotation.inverse() * (world - self.translation)
    }

    pub fn transform_vector(&self, local: &Vec3) -> Vec3 {
        self.rotation * local
    }

    pub fn isometry(&self) -> nalgebra::Isometry3<f64> {
        nalgebra::Isometry3::from_parts(
            Translation3::from(self.translation),
            self.rotation,
        )
    }

    pub fn apply(&self, p: &Point3<f64>) -> Point3<f64> {
        self.isometry() * p
    }

    /// Deviation of the stored quaternion from unit norm.
    pub fn norm_error(&self) -> f64 {
        (self.rotation.quaternion().norm() - 1.0).abs()
    }
}

/// Continuous image coordinate; integer values are pixel centres.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pixel {
    pub u: f64,
    pub v: f64,
}

impl Pixel {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn distance(&self, other: &Pixel) -> f64 {
        (self.u - other.u).hypot(self.v - other.v)
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.v.is_finite()
    }

    /// Nearest pixel centre inside a `width × height` image.
    pub fn clamped(&self, width: u32, height: u32) -> Pixel {
        Pixel {
            u: self.u.clamp(0.0, (width - 1) as f64),
            v: self.v.clamp(0.0, (height - 1) as f64),
        }
    }
}

/// 8-bit RGB triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rgb(pub [u8; 3]);

impl Rgb {
    pub const BLUE: Rgb = Rgb([40, 70, 200]);
    pub const WHITE: Rgb = Rgb([246, 246, 242]);

    pub fn r(self) -> u8 {
        self.0[0]
    }
    pub fn g(self) -> u8 {
        self.0[1]
    }
    pub fn b(self) -> u8 {
        self.0[2]
    }
}
