use nalgebra::Matrix3;

use super::mesh::{spherical_dir, Vec3};
use crate::error::{Error, Result};

/// Distance of every rig camera from the object center.
pub const RIG_RADIUS: f64 = 2.5;
pub const RIG_FOV_DEG: f64 = 45.0;
pub const RIG_LOW_ELEVATION_DEG: f64 = 20.0;
pub const RIG_HIGH_ELEVATION_DEG: f64 = 55.0;

/// A pinhole camera. World space is z-up; camera space looks down -z with +y up.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub position: Vec3,
    pub target: Vec3,
    pub up: Vec3,
    pub fov_deg: f64,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    pub fn new(position: Vec3, target: Vec3, up: Vec3, fov_deg: f64, width: usize, height: usize) -> Result<Self> {
        if (position - target).norm() <= 0.0 {
            return Err(Error::Argument("camera position equals its target".into()));
        }
        if !(fov_deg > 0.0 && fov_deg < 180.0) {
            return Err(Error::Argument(format!("field of view {fov_deg} outside (0, 180)")));
        }
        if width == 0 || height == 0 {
            return Err(Error::Argument("camera resolution must be non-zero".into()));
        }
        let fwd = (target - position).normalize();
        if fwd.cross(&up).norm() < 1e-9 {
            return Err(Error::Argument("camera up vector is parallel to the view direction".into()));
        }
        Ok(Self {
            position,
            target,
            up,
            fov_deg,
            width,
            height,
        })
    }

    /// Rows are the camera's right, up and backward axes in world space, so
    /// `rotation() * (p - position)` maps world points into camera space.
    pub fn rotation(&self) -> Matrix3<f64> {
        let back = (self.position - self.target).normalize();
        let right = self.up.cross(&back).normalize();
        let up = back.cross(&right);
        Matrix3::from_rows(&[right.transpose(), up.transpose(), back.transpose()])
    }

    pub fn to_camera_space(&self, p: &Vec3) -> Vec3 {
        self.rotation() * (p - self.position)
    }

    /// Unit vector from the target toward the camera.
    pub fn direction(&self) -> Vec3 {
        (self.position - self.target).normalize()
    }

    #[inline]
    pub fn focal(&self) -> f64 {
        1.0 / (self.fov_deg.to_radians() * 0.5).tan()
    }

    /// Projects a camera-space point to continuous pixel coordinates (pixel centers at
    /// `i + 0.5`) and returns the positive view depth. `None` behind the camera.
    pub fn project_camera_space(&self, pc: &Vec3) -> Option<(f64, f64, f64)> {
        let depth = -pc.z;
        if depth <= 1e-9 {
            return None;
        }
        let aspect = self.width as f64 / self.height as f64;
        let f = self.focal();
        let xn = pc.x / depth * f / aspect;
        let yn = pc.y / depth * f;
        Some((
            (xn + 1.0) * 0.5 * self.width as f64,
            (1.0 - yn) * 0.5 * self.height as f64,
            depth,
        ))
    }

    pub fn project(&self, p: &Vec3) -> Option<(f64, f64, f64)> {
        self.project_camera_space(&self.to_camera_space(p))
    }

    pub fn with_resolution(mut self, width: usize, height: usize) -> Self {
        self.width = width;
        self.height = height;
        self
    }
}

/// Fixed camera ring around the origin. Six views sit at azimuths 0..300 in 60 degree
/// steps at 20 degrees elevation; ten views add azimuths 45, 135, 225, 315 at 55 degrees.
pub fn camera_ring(n_views: usize, resolution: usize) -> Result<Vec<Camera>> {
    let mut poses: Vec<(f64, f64)> = match n_views {
        6 | 10 => (0..6).map(|i| (60.0 * i as f64, RIG_LOW_ELEVATION_DEG)).collect(),
        other => return Err(Error::Argument(format!("camera rig supports 6 or 10 views, got {other}"))),
    };
    if n_views == 10 {
        poses.extend([45.0, 135.0, 225.0, 315.0].map(|a| (a, RIG_HIGH_ELEVATION_DEG)));
    }
    poses
        .into_iter()
        .map(|(az, el)| {
            Camera::new(
                spherical_dir(az, el) * RIG_RADIUS,
                Vec3::zeros(),
                Vec3::z(),
                RIG_FOV_DEG,
                resolution,
                resolution,
            )
        })
        .collect()
}
