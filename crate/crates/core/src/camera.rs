//! Pinhole camera: +z forward, +x right, +y down, pixel origin at the
//! top-left image corner. Pixel `(x, y)` covers `[x, x+1) x [y, y+1)`, so
//! its centre sits at `(x + 0.5, y + 0.5)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rotation;
use crate::{Mat3, Vec2, Vec3};

/// Minimum depth accepted by [`project_jacobian`].
pub const MIN_DEPTH: f64 = 1e-6;

/// Extrinsics (axis-angle rotation, translation in meters) and intrinsics
/// (focal length and principal point in pixels).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraParams {
    pub rotation: [f64; 3],
    pub translation: [f64; 3],
    pub focal_length: f64,
    pub principal_point: [f64; 2],
}

impl CameraParams {
    /// Identity pose looking down +z with the given intrinsics.
    pub fn frontal(focal_length: f64, principal_point: [f64; 2], depth: f64) -> Self {
        CameraParams {
            rotation: [0.0; 3],
            translation: [0.0, 0.0, depth],
            focal_length,
            principal_point,
        }
    }

    pub fn omega(&self) -> Vec3 {
        Vec3::from(self.rotation)
    }

    pub fn t(&self) -> Vec3 {
        Vec3::from(self.translation)
    }

    pub fn pp(&self) -> Vec2 {
        Vec2::from(self.principal_point)
    }

    pub fn rotation_matrix(&self) -> Mat3 {
        rotation::exp(&self.omega())
    }

    pub fn validate(&self) -> Result<()> {
        let all = self
            .rotation
            .iter()
            .chain(&self.translation)
            .chain(std::iter::once(&self.focal_length))
            .chain(&self.principal_point);
        if let Some(index) = all.clone().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteData {
                field: "camera".into(),
                index,
            });
        }
        if self.focal_length <= 0.0 {
            return Err(Error::InvalidValue {
                field: "focal_length".into(),
                detail: "must be positive".into(),
            });
        }
        if self.omega().norm() >= std::f64::consts::PI {
            return Err(Error::InvalidValue {
                field: "rotation".into(),
                detail: "rotation angle must be below pi".into(),
            });
        }
        Ok(())
    }

    /// World point to camera frame.
    pub fn to_camera(&self, p: &Vec3) -> Vec3 {
        self.rotation_matrix() * p + self.t()
    }

    /// Camera-frame point to pixel coordinates.
    pub fn pixel_of(&self, pc: &Vec3) -> Vec2 {
        self.focal_length * Vec2::new(pc.x / pc.z, pc.y / pc.z) + self.pp()
    }

    /// Camera-frame point at `depth` along the ray through `pixel`.
    pub fn unproject(&self, pixel: &Vec2, depth: f64) -> Vec3 {
        let xy = (pixel - self.pp()) / self.focal_length;
        Vec3::new(xy.x * depth, xy.y * depth, depth)
    }

    /// Viewing ray direction (z component 1) through a pixel position.
    pub fn ray(&self, pixel: &Vec2) -> Vec3 {
        let xy = (pixel - self.pp()) / self.focal_length;
        Vec3::new(xy.x, xy.y, 1.0)
    }
}

/// Projected pixels and camera-frame depths. Points at or behind the
/// camera plane are reported through `depth <= 0` rather than an error.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub pixels: Vec<Vec2>,
    pub depths: Vec<f64>,
}

pub fn project(points: &[Vec3], cam: &CameraParams) -> Projection {
    let r = cam.rotation_matrix();
    let t = cam.t();
    let (pixels, depths) = points
        .iter()
        .map(|p| {
            let pc = r * p + t;
            (cam.pixel_of(&pc), pc.z)
        })
        .unzip();
    Projection { pixels, depths }
}

/// Derivatives of one projected pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointJacobian {
    /// d pixel / d world point (2x3).
    pub d_point: nalgebra::Matrix2x3<f64>,
    pub d_rotation: nalgebra::Matrix2x3<f64>,
    pub d_translation: nalgebra::Matrix2x3<f64>,
    pub d_focal: Vec2,
    /// d pixel / d principal point, always the identity.
    pub d_principal: nalgebra::Matrix2<f64>,
}

/// d pixel / d camera-frame point.
pub fn pixel_wrt_camera_point(pc: &Vec3, focal: f64) -> nalgebra::Matrix2x3<f64> {
    let iz = 1.0 / pc.z;
    let f = focal * iz;
    nalgebra::Matrix2x3::new(f, 0.0, -f * pc.x * iz, 0.0, f, -f * pc.y * iz)
}

pub fn project_jacobian(points: &[Vec3], cam: &CameraParams) -> Result<Vec<PointJacobian>> {
    let r = cam.rotation_matrix();
    let dr = rotation::exp_derivatives(&cam.omega());
    let t = cam.t();
    points
        .iter()
        .enumerate()
        .map(|(index, p)| {
            let pc = r * p + t;
            if pc.z <= MIN_DEPTH {
                return Err(Error::NearZeroDepth { index, depth: pc.z });
            }
            let dpc = pixel_wrt_camera_point(&pc, cam.focal_length);
            let mut d_rotation = nalgebra::Matrix2x3::zeros();
            for i in 0..3 {
                d_rotation.set_column(i, &(dpc * (dr[i] * p)));
            }
            Ok(PointJacobian {
                d_point: dpc * r,
                d_rotation,
                d_translation: dpc,
                d_focal: Vec2::new(pc.x / pc.z, pc.y / pc.z),
                d_principal: nalgebra::Matrix2::identity(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cam() -> CameraParams {
        CameraParams::frontal(500.0, [256.0, 256.0], 0.0)
    }

    #[test]
    fn optical_axis_hits_principal_point() {
        let p = project(&[Vec3::new(0.0, 0.0, 1.0)], &cam());
        assert_eq!(p.pixels[0], Vec2::new(256.0, 256.0));
        assert_eq!(p.depths[0], 1.0);
    }

    #[test]
    fn lateral_offset_scales_with_focal() {
        let p = project(&[Vec3::new(0.1, 0.0, 1.0)], &cam());
        assert!((p.pixels[0] - Vec2::new(306.0, 256.0)).norm() < 1e-12);
    }

    #[test]
    fn behind_camera_is_flagged_not_failed() {
        let p = project(&[Vec3::new(0.0, 0.0, -1.0)], &cam());
        assert!(p.depths[0] < 0.0);
        let err = project_jacobian(&[Vec3::new(0.0, 0.0, -1.0)], &cam()).unwrap_err();
        assert!(matches!(err, Error::NearZeroDepth { index: 0, .. }));
    }

    #[test]
    fn composed_rigid_transform_leaves_pixels_unchanged() {
        let base = CameraParams {
            rotation: [0.1, -0.2, 0.05],
            translation: [0.01, 0.02, 0.8],
            focal_length: 450.0,
            principal_point: [128.0, 120.0],
        };
        let pts = [Vec3::new(0.05, -0.03, 0.1), Vec3::new(-0.07, 0.02, -0.04)];
        // move points by (Q, s), compensate camera by (R Q^T, t - R Q^T s)
        let q = rotation::exp(&Vec3::new(0.4, 0.3, -0.2));
        let s = Vec3::new(0.3, -0.1, 0.2);
        let moved: Vec<Vec3> = pts.iter().map(|p| q * p + s).collect();
        let r2 = base.rotation_matrix() * q.transpose();
        let comp = CameraParams {
            rotation: rotation::log(&r2).into(),
            translation: (base.t() - r2 * s).into(),
            ..base.clone()
        };
        let a = project(&pts, &base);
        let b = project(&moved, &comp);
        for (x, y) in a.pixels.iter().zip(&b.pixels) {
            assert!((x - y).norm() < 1e-9);
        }
    }

    #[test]
    fn unproject_recovers_camera_point() {
        let c = CameraParams {
            rotation: [0.0; 3],
            translation: [0.0; 3],
            focal_length: 321.0,
            principal_point: [100.5, 90.25],
        };
        let pc = Vec3::new(0.12, -0.07, 0.9);
        let px = c.pixel_of(&pc);
        assert!((c.unproject(&px, pc.z) - pc).norm() < 1e-9);
    }

    #[test]
    fn principal_and_focal_derivatives_are_trivial() {
        let c = CameraParams {
            rotation: [0.2, 0.1, -0.3],
            translation: [0.0, 0.0, 1.0],
            focal_length: 400.0,
            principal_point: [64.0, 64.0],
        };
        let p = Vec3::new(0.1, 0.2, 0.3);
        let j = project_jacobian(&[p], &c).unwrap()[0];
        assert_eq!(j.d_principal, nalgebra::Matrix2::identity());
        let pc = c.to_camera(&p);
        assert!((j.d_focal - Vec2::new(pc.x / pc.z, pc.y / pc.z)).norm() < 1e-15);
    }
}
