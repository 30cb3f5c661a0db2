//! Benchmark evaluation: rigid alignment of a predicted mesh to a ground
//! truth point cloud, region masking, and the Chamfer L1/L2, normal
//! consistency and recall metrics. Distances are in millimetres.

mod align;
mod bvh;

pub use align::{procrustes, rigid_align, IcpConfig, RigidTransform};
pub use bvh::{closest_point_on_triangle, Bvh, SurfaceHit};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::normal_sums;
use crate::Vec3;

/// Recall threshold in millimetres.
pub const RECALL_THRESHOLD_MM: f64 = 2.5;

/// Ground-truth scan: points with unit normals and optional region labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    pub labels: Option<Vec<i32>>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::InvalidValue {
                field: "point cloud".into(),
                detail: "no points".into(),
            });
        }
        if self.normals.len() != self.points.len() {
            return Err(Error::dim("point normals", self.points.len(), self.normals.len()));
        }
        if let Some(l) = &self.labels {
            if l.len() != self.points.len() {
                return Err(Error::dim("point labels", self.points.len(), l.len()));
            }
        }
        for (i, p) in self.points.iter().enumerate() {
            if !p.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFiniteData {
                    field: "points".into(),
                    index: i,
                });
            }
        }
        for (i, n) in self.normals.iter().enumerate() {
            if !n.norm().is_finite() || (n.norm() - 1.0).abs() > 1e-3 {
                return Err(Error::InvalidValue {
                    field: "normals".into(),
                    detail: format!("normal {i} is not unit length"),
                });
            }
        }
        Ok(())
    }

    /// Points and normals under a rigid transform.
    pub fn transformed(&self, tf: &RigidTransform) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|p| tf.apply(p)).collect(),
            normals: self.normals.iter().map(|n| tf.rotation * n).collect(),
            labels: self.labels.clone(),
        }
    }

    /// Copy with every coordinate multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|p| p * factor).collect(),
            ..self.clone()
        }
    }
}

/// Triangle mesh prepared for nearest-surface queries, with area-weighted
/// vertex normals for interpolation.
#[derive(Debug, Clone)]
pub struct MeshSurface {
    bvh: Bvh,
    vertex_normals: Vec<Vec3>,
}

/// Nearest surface point with the interpolated mesh normal there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NearestSurface {
    pub distance: f64,
    pub point: Vec3,
    pub triangle: usize,
    pub normal: Vec3,
}

impl MeshSurface {
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> Result<Self> {
        if triangles.is_empty() {
            return Err(Error::DegenerateGeometry("mesh has no triangles".into()));
        }
        for t in &triangles {
            for &v in t {
                if v as usize >= vertices.len() {
                    return Err(Error::IndexOutOfRange {
                        field: "triangle".into(),
                        index: v as usize,
                        len: vertices.len(),
                    });
                }
            }
        }
        let vertex_normals = normal_sums(&vertices, &triangles)
            .into_iter()
            .map(|s| {
                let l = s.norm();
                if l > 0.0 {
                    s / l
                } else {
                    s
                }
            })
            .collect();
        Ok(MeshSurface {
            bvh: Bvh::new(vertices, triangles),
            vertex_normals,
        })
    }

    pub fn from_mesh(mesh: &crate::io::Mesh) -> Result<Self> {
        Self::new(mesh.vertices.clone(), mesh.triangles.clone())
    }

    pub fn vertices(&self) -> &[Vec3] {
        self.bvh.vertices()
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        self.bvh.triangles()
    }

    pub fn bvh(&self) -> &Bvh {
        &self.bvh
    }

    fn finish(&self, hit: SurfaceHit) -> NearestSurface {
        let tri = self.bvh.triangles()[hit.triangle].map(|v| v as usize);
        let mut n = Vec3::zeros();
        for k in 0..3 {
            n += hit.barycentric[k] * self.vertex_normals[tri[k]];
        }
        let l = n.norm();
        let normal = if l > 1e-12 {
            n / l
        } else {
            let [a, b, c] = tri.map(|v| self.bvh.vertices()[v]);
            (b - a).cross(&(c - a)).normalize()
        };
        NearestSurface {
            distance: hit.distance,
            point: hit.point,
            triangle: hit.triangle,
            normal,
        }
    }

    /// Exact nearest surface point through the BVH.
    pub fn nearest(&self, p: &Vec3) -> NearestSurface {
        self.finish(self.bvh.nearest(p).expect("mesh is nonempty"))
    }

    /// Same answer as [`MeshSurface::nearest`] by scanning every triangle.
    pub fn nearest_brute_force(&self, p: &Vec3) -> NearestSurface {
        self.finish(self.bvh.nearest_brute_force(p).expect("mesh is nonempty"))
    }
}

/// Distance, nearest point, triangle id and surface normal for one query.
pub fn point_to_mesh_distance(point: &Vec3, mesh: &MeshSurface) -> NearestSurface {
    mesh.nearest(point)
}

/// Benchmark metrics for one prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub l1_mm: f64,
    pub l2_mm: f64,
    pub nc: f64,
    /// Fraction of points within the recall threshold; higher is better.
    pub recall_2_5: f64,
    pub points: usize,
    pub aligned_transform: RigidTransform,
}

/// Metrics over ground-truth points whose label is in `keep` (all points
/// when `keep` is `None` or the cloud has no labels). The mesh must
/// already be aligned.
pub fn compute_metrics(mesh: &MeshSurface, gt: &PointCloud, keep: Option<&[i32]>) -> Result<MetricsRecord> {
    compute_metrics_with_threshold(mesh, gt, keep, RECALL_THRESHOLD_MM)
}

pub fn compute_metrics_with_threshold(
    mesh: &MeshSurface,
    gt: &PointCloud,
    keep: Option<&[i32]>,
    threshold: f64,
) -> Result<MetricsRecord> {
    let kept = kept_indices(gt, keep);
    if kept.is_empty() {
        return Err(Error::EmptyAfterMasking);
    }
    let hits: Vec<(f64, f64)> = kept
        .par_iter()
        .map(|&i| {
            let h = mesh.nearest(&gt.points[i]);
            (h.distance, h.normal.dot(&gt.normals[i]))
        })
        .collect();
    let n = hits.len() as f64;
    let l1 = hits.iter().map(|h| h.0).sum::<f64>() / n;
    let l2 = (hits.iter().map(|h| h.0 * h.0).sum::<f64>() / n).sqrt();
    let nc = hits.iter().map(|h| h.1).sum::<f64>() / n;
    let recall = hits.iter().filter(|h| h.0 <= threshold).count() as f64 / n;
    Ok(MetricsRecord {
        l1_mm: l1,
        l2_mm: l2,
        nc,
        recall_2_5: recall,
        points: hits.len(),
        aligned_transform: RigidTransform::identity(),
    })
}

pub(crate) fn kept_indices(gt: &PointCloud, keep: Option<&[i32]>) -> Vec<usize> {
    match (keep, &gt.labels) {
        (Some(keep), Some(labels)) => (0..gt.len()).filter(|&i| keep.contains(&labels[i])).collect(),
        _ => (0..gt.len()).collect(),
    }
}

/// Full protocol for one subject: align `mesh_vertices` to `gt` using the
/// landmark pairs and ICP, then compute metrics on the aligned mesh.
pub fn evaluate(
    mesh_vertices: &[Vec3],
    triangles: &[[u32; 3]],
    gt: &PointCloud,
    landmarks: &[(u32, Vec3)],
    keep: Option<&[i32]>,
    icp: &IcpConfig,
) -> Result<MetricsRecord> {
    gt.validate()?;
    let surface = MeshSurface::new(mesh_vertices.to_vec(), triangles.to_vec())?;
    let kept = kept_indices(gt, keep);
    if kept.is_empty() {
        return Err(Error::EmptyAfterMasking);
    }
    let tf = rigid_align(&surface, gt, landmarks, icp)?;
    let aligned = MeshSurface::new(mesh_vertices.iter().map(|v| tf.apply(v)).collect(), triangles.to_vec())?;
    let mut rec = compute_metrics(&aligned, gt, keep)?;
    rec.aligned_transform = tf;
    Ok(rec)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad_surface() -> MeshSurface {
        let v = vec![
            Vec3::new(-50.0, -50.0, 0.0),
            Vec3::new(50.0, -50.0, 0.0),
            Vec3::new(50.0, 50.0, 0.0),
            Vec3::new(-50.0, 50.0, 0.0),
        ];
        MeshSurface::new(v, vec![[0, 1, 2], [0, 2, 3]]).unwrap()
    }

    fn cloud(points: Vec<Vec3>) -> PointCloud {
        let normals = vec![Vec3::z(); points.len()];
        PointCloud {
            points,
            normals,
            labels: None,
        }
    }

    #[test]
    fn points_on_surface_give_perfect_scores() {
        let gt = cloud(vec![Vec3::new(1.0, 2.0, 0.0), Vec3::new(-10.0, 5.0, 0.0)]);
        let m = compute_metrics(&quad_surface(), &gt, None).unwrap();
        assert_eq!((m.l1_mm, m.l2_mm, m.recall_2_5), (0.0, 0.0, 1.0));
        assert!((m.nc - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_point_at_three_mm() {
        let gt = cloud(vec![Vec3::new(1.0, 2.0, 3.0)]);
        let m = compute_metrics(&quad_surface(), &gt, None).unwrap();
        assert!((m.l1_mm - 3.0).abs() < 1e-12);
        assert!((m.l2_mm - 3.0).abs() < 1e-12);
        assert_eq!(m.recall_2_5, 0.0);
    }

    #[test]
    fn masking_keeps_listed_labels() {
        let mut gt = cloud(vec![Vec3::new(0.0, 0.0, 1.0), Vec3::new(0.0, 0.0, 5.0)]);
        gt.labels = Some(vec![1, 2]);
        let m = compute_metrics(&quad_surface(), &gt, Some(&[1])).unwrap();
        assert_eq!(m.points, 1);
        assert!((m.l1_mm - 1.0).abs() < 1e-12);
        assert!(matches!(
            compute_metrics(&quad_surface(), &gt, Some(&[9])),
            Err(Error::EmptyAfterMasking)
        ));
    }
}
