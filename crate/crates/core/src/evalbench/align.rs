//! Landmark Procrustes followed by trimmed point-to-plane ICP.

use serde::{Deserialize, Serialize};

use super::{MeshSurface, PointCloud};
use crate::error::{Error, Result};
use crate::rotation;
use crate::{Mat3, Vec3};

/// `x -> scale * rotation * x + translation`; scale is always 1 here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "TransformRepr", from = "TransformRepr")]
pub struct RigidTransform {
    pub rotation: Mat3,
    pub translation: Vec3,
    pub scale: f64,
}

#[derive(Serialize, Deserialize)]
struct TransformRepr {
    /// Row-major.
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
    scale: f64,
}

impl From<RigidTransform> for TransformRepr {
    fn from(t: RigidTransform) -> Self {
        let r = t.rotation;
        TransformRepr {
            rotation: [0, 1, 2].map(|i| [r[(i, 0)], r[(i, 1)], r[(i, 2)]]),
            translation: t.translation.into(),
            scale: t.scale,
        }
    }
}

impl From<TransformRepr> for RigidTransform {
    fn from(t: TransformRepr) -> Self {
        RigidTransform {
            rotation: Mat3::from_fn(|i, j| t.rotation[i][j]),
            translation: Vec3::from(t.translation),
            scale: t.scale,
        }
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
            scale: 1.0,
        }
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.scale * (self.rotation * p) + self.translation
    }

    /// `self` after `other`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.apply(&other.translation),
            scale: self.scale * other.scale,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation) / self.scale,
            scale: 1.0 / self.scale,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcpConfig {
    pub max_iterations: usize,
    /// Fraction of the closest correspondences kept per iteration.
    pub inlier_fraction: f64,
    /// Stop once the relative change of the inlier RMSE drops below this.
    pub relative_tolerance: f64,
}

impl Default for IcpConfig {
    fn default() -> Self {
        IcpConfig {
            max_iterations: 50,
            inlier_fraction: 0.9,
            relative_tolerance: 1e-6,
        }
    }
}

fn check_spread(points: &[Vec3], what: &str) -> Result<()> {
    let n = points.len() as f64;
    let c = points.iter().sum::<Vec3>() / n;
    let cov = points.iter().fold(Mat3::zeros(), |acc, p| acc + (p - c) * (p - c).transpose());
    let sv = cov.singular_values();
    let mut s = [sv[0], sv[1], sv[2]];
    s.sort_by(|a, b| b.total_cmp(a));
    let scale = points.iter().map(|p| p.norm()).fold(1.0, f64::max);
    if s[0] <= 1e-18 * scale * scale {
        return Err(Error::DegenerateLandmarks(format!("{what} landmarks are coincident")));
    }
    if s[1] <= 1e-12 * s[0] {
        return Err(Error::DegenerateLandmarks(format!("{what} landmarks are collinear")));
    }
    Ok(())
}

/// Least-squares rotation and translation taking `src` onto `dst`.
pub fn procrustes(src: &[Vec3], dst: &[Vec3]) -> Result<RigidTransform> {
    if src.len() != dst.len() {
        return Err(Error::dim("landmark pairs", src.len(), dst.len()));
    }
    if src.len() < 3 {
        return Err(Error::DegenerateLandmarks(format!("need 3 landmark pairs, got {}", src.len())));
    }
    check_spread(src, "mesh")?;
    check_spread(dst, "target")?;
    let n = src.len() as f64;
    let cs = src.iter().sum::<Vec3>() / n;
    let cd = dst.iter().sum::<Vec3>() / n;
    let h = src
        .iter()
        .zip(dst)
        .fold(Mat3::zeros(), |acc, (s, d)| acc + (s - cs) * (d - cd).transpose());
    let svd = h.svd(true, true);
    let u = svd.u.expect("u requested");
    let v = svd.v_t.expect("v_t requested").transpose();
    let d = (v * u.transpose()).determinant().signum();
    let rotation = v * Mat3::from_diagonal(&Vec3::new(1.0, 1.0, d)) * u.transpose();
    Ok(RigidTransform {
        rotation,
        translation: cd - rotation * cs,
        scale: 1.0,
    })
}

/// Transform taking the mesh onto `gt`: Procrustes on the landmark pairs
/// `(mesh vertex, gt point)`, then ICP from the ground-truth points to the
/// mesh surface.
pub fn rigid_align(
    mesh: &MeshSurface,
    gt: &PointCloud,
    landmarks: &[(u32, Vec3)],
    cfg: &IcpConfig,
) -> Result<RigidTransform> {
    let verts = mesh.vertices();
    let mut src = Vec::with_capacity(landmarks.len());
    for &(v, _) in landmarks {
        src.push(*verts.get(v as usize).ok_or(Error::IndexOutOfRange {
            field: "landmark vertex".into(),
            index: v as usize,
            len: verts.len(),
        })?);
    }
    let dst: Vec<Vec3> = landmarks.iter().map(|l| l.1).collect();
    let mut tf = procrustes(&src, &dst)?;
    if gt.is_empty() {
        return Ok(tf);
    }
    let keep = ((gt.len() as f64 * cfg.inlier_fraction).ceil() as usize).clamp(1, gt.len());
    let mut prev_rmse: Option<f64> = None;
    for _ in 0..cfg.max_iterations {
        // ground truth into the mesh frame
        let inv = tf.inverse();
        let mut rows: Vec<(f64, Vec3, Vec3, Vec3)> = gt
            .points
            .iter()
            .map(|q| {
                let q = inv.apply(q);
                let hit = mesh.nearest(&q);
                let [a, b, c] = mesh.triangles()[hit.triangle].map(|v| verts[v as usize]);
                let n = (b - a).cross(&(c - a)).normalize();
                (hit.distance, hit.point, n, q)
            })
            .collect();
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        rows.truncate(keep);
        let rmse = (rows.iter().map(|r| r.0 * r.0).sum::<f64>() / keep as f64).sqrt();
        if let Some(p) = prev_rmse {
            if (p - rmse).abs() <= cfg.relative_tolerance * p.max(f64::MIN_POSITIVE) {
                break;
            }
        }
        if rmse == 0.0 {
            break;
        }
        prev_rmse = Some(rmse);
        let mut ata = nalgebra::Matrix6::<f64>::zeros();
        let mut atb = nalgebra::Vector6::<f64>::zeros();
        for (_, p, n, q) in &rows {
            if !n.iter().all(|v| v.is_finite()) {
                continue;
            }
            let pn = p.cross(n);
            let a = nalgebra::Vector6::new(pn.x, pn.y, pn.z, n.x, n.y, n.z);
            let r = n.dot(&(p - q));
            ata += a * a.transpose();
            atb -= a * r;
        }
        let svd = ata.svd(true, true);
        let tol = 1e-12 * svd.singular_values.max();
        let Ok(x) = svd.solve(&atb, tol) else { break };
        let delta = RigidTransform {
            rotation: rotation::exp(&Vec3::new(x[0], x[1], x[2])),
            translation: Vec3::new(x[3], x[4], x[5]),
            scale: 1.0,
        };
        tf = tf.compose(&delta);
    }
    Ok(tf)
}
