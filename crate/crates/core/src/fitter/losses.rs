//! Individual energy terms with their gradients.

use crate::correspond::CorrespondenceSet;
use crate::error::{Error, Result};
use crate::map::MapImage;
use crate::model::{FaceGradient, FaceParams};
use crate::{Vec2, Vec3};

/// Sign with a zero subgradient at zero.
#[inline]
pub(crate) fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Mean L1 pixel distance between correspondence targets and projected
/// vertices, over vertices that are both accepted and visible. Returns the
/// loss and its gradient w.r.t. every projected position.
pub fn uv_vertex_loss(corr: &CorrespondenceSet, projected: &[Vec2], visible: &[bool]) -> (f64, Vec<Vec2>) {
    let mut grad = vec![Vec2::zeros(); projected.len()];
    let contributing: Vec<usize> = (0..projected.len())
        .filter(|&i| corr.items[i].accepted && visible[i])
        .collect();
    if contributing.is_empty() {
        return (0.0, grad);
    }
    let inv = 1.0 / contributing.len() as f64;
    let mut loss = 0.0;
    for &i in &contributing {
        let d = projected[i] - corr.items[i].target_pixel;
        loss += d.x.abs() + d.y.abs();
        grad[i] = Vec2::new(sgn(d.x), sgn(d.y)) * inv;
    }
    (loss * inv, grad)
}

/// Sparse 2D landmark target for one model vertex.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Landmark2d {
    pub vertex: u32,
    pub pixel: [f64; 2],
}

/// Mean L1 pixel distance over landmark pairs.
pub fn landmark_loss(landmarks: &[Landmark2d], projected: &[Vec2]) -> Result<(f64, Vec<Vec2>)> {
    let mut grad = vec![Vec2::zeros(); projected.len()];
    if landmarks.is_empty() {
        return Ok((0.0, grad));
    }
    let inv = 1.0 / landmarks.len() as f64;
    let mut loss = 0.0;
    for l in landmarks {
        let i = l.vertex as usize;
        if i >= projected.len() {
            return Err(Error::IndexOutOfRange {
                field: "landmark vertex".into(),
                index: i,
                len: projected.len(),
            });
        }
        let d = projected[i] - Vec2::from(l.pixel);
        loss += d.x.abs() + d.y.abs();
        grad[i] += Vec2::new(sgn(d.x), sgn(d.y)) * inv;
    }
    Ok((loss * inv, grad))
}

/// Mean absolute per-channel difference over pixels valid in `pred`,
/// `rendered` and `mask`. The gradient is w.r.t. the rendered channel
/// values, laid out like `rendered.data`.
pub fn normal_loss(pred: &MapImage, rendered: &MapImage, mask: &MapImage) -> Result<(f64, Vec<f64>)> {
    pred.same_size(rendered, "rendered normals")?;
    pred.same_size(mask, "mask")?;
    if pred.channels != 3 || rendered.channels != 3 {
        return Err(Error::dim("normal map channels", 3, pred.channels.min(rendered.channels)));
    }
    let mut grad = vec![0.0; rendered.data.len()];
    let pixels: Vec<usize> = (0..pred.num_pixels())
        .filter(|&i| pred.valid[i] && rendered.valid[i] && mask.valid[i])
        .collect();
    if pixels.is_empty() {
        return Ok((0.0, grad));
    }
    let w = 1.0 / (3 * pixels.len()) as f64;
    let mut loss = 0.0;
    for &i in &pixels {
        for c in 0..3 {
            let d = rendered.data[i * 3 + c] as f64 - pred.data[i * 3 + c] as f64;
            loss += d.abs();
            grad[i * 3 + c] = sgn(d) * w;
        }
    }
    Ok((loss * w, grad))
}

/// `lambda_id |z_id - anchor|^2 + lambda_ex |z_ex|^2`; the anchor is the
/// external identity estimate, or zero when absent.
pub fn regularization(
    face: &FaceParams,
    anchor: Option<&[f64]>,
    lambda_id: f64,
    lambda_ex: f64,
) -> Result<(f64, FaceGradient)> {
    if let Some(a) = anchor {
        if a.len() != face.z_id.len() {
            return Err(Error::dim("identity anchor", face.z_id.len(), a.len()));
        }
    }
    let mut value = 0.0;
    let z_id = face
        .z_id
        .iter()
        .enumerate()
        .map(|(k, &z)| {
            let d = z - anchor.map_or(0.0, |a| a[k]);
            value += lambda_id * d * d;
            2.0 * lambda_id * d
        })
        .collect();
    let z_ex = face
        .z_ex
        .iter()
        .map(|&z| {
            value += lambda_ex * z * z;
            2.0 * lambda_ex * z
        })
        .collect();
    Ok((
        value,
        FaceGradient {
            z_id,
            z_ex,
            jaw_theta: Vec3::zeros(),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correspond::Correspondence;

    fn corr(targets: &[(f64, f64, bool)]) -> CorrespondenceSet {
        CorrespondenceSet {
            items: targets
                .iter()
                .map(|&(x, y, a)| Correspondence {
                    target_pixel: Vec2::new(x, y),
                    uv_distance: if a { 0.0 } else { 1.0 },
                    accepted: a,
                })
                .collect(),
        }
    }

    #[test]
    fn uv_loss_zero_at_targets() {
        let c = corr(&[(1.0, 2.0, true), (3.0, 4.0, true)]);
        let (l, g) = uv_vertex_loss(&c, &[Vec2::new(1.0, 2.0), Vec2::new(3.0, 4.0)], &[true, true]);
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|v| *v == Vec2::zeros()));
    }

    #[test]
    fn uv_loss_single_offset() {
        let c = corr(&[(10.0, 10.0, true), (0.0, 0.0, false), (5.0, 5.0, true)]);
        let p = [Vec2::new(13.0, 14.0), Vec2::new(100.0, 100.0), Vec2::new(0.0, 0.0)];
        let (l, _) = uv_vertex_loss(&c, &p, &[true, true, false]);
        assert_eq!(l, 7.0);
        let (none, g) = uv_vertex_loss(&c, &p, &[false; 3]);
        assert_eq!(none, 0.0);
        assert!(g.iter().all(|v| *v == Vec2::zeros()));
    }

    #[test]
    fn landmark_loss_cases() {
        let p = [Vec2::new(1.0, 1.0), Vec2::new(5.0, 5.0)];
        assert_eq!(landmark_loss(&[], &p).unwrap().0, 0.0);
        let one = [Landmark2d { vertex: 1, pixel: [4.0, 6.0] }];
        assert_eq!(landmark_loss(&one, &p).unwrap().0, 2.0);
        let bad = [Landmark2d { vertex: 2, pixel: [0.0, 0.0] }];
        assert!(matches!(landmark_loss(&bad, &p), Err(Error::IndexOutOfRange { .. })));
    }

    fn map3(values: &[[f32; 3]]) -> MapImage {
        let mut m = MapImage::new(values.len(), 1, 3);
        for (i, v) in values.iter().enumerate() {
            m.pixel_mut(i).copy_from_slice(v);
            m.valid[i] = true;
        }
        m
    }

    #[test]
    fn normal_loss_cases() {
        let a = map3(&[[0.0, 0.0, 1.0], [0.6, 0.0, -0.8]]);
        let mask = MapImage::from_mask(2, 1, vec![true, true]);
        assert_eq!(normal_loss(&a, &a, &mask).unwrap().0, 0.0);

        let pred = map3(&[[0.0, 0.0, 1.0]]);
        let rend = map3(&[[0.0, 0.0, -1.0]]);
        let m1 = MapImage::from_mask(1, 1, vec![true]);
        let (l, g) = normal_loss(&pred, &rend, &m1).unwrap();
        assert!((l - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(g, vec![0.0, 0.0, -1.0 / 3.0]);

        let off = MapImage::from_mask(1, 1, vec![false]);
        assert_eq!(normal_loss(&pred, &rend, &off).unwrap().0, 0.0);
    }

    #[test]
    fn regularization_arithmetic() {
        let face = FaceParams {
            z_id: vec![1.0, 2.0],
            z_ex: vec![3.0],
            jaw_theta: [0.0; 3],
        };
        let (v, _) = regularization(&face, Some(&[1.0, 2.0]), 0.15, 0.0).unwrap();
        assert_eq!(v, 0.0);
        // |z_id - mica|^2 = 4, |z_ex|^2 = 9
        let (v, g) = regularization(&face, Some(&[1.0, 0.0]), 0.15, 0.01).unwrap();
        assert!((v - 0.69).abs() < 1e-12);
        assert_eq!(g.z_id, vec![0.0, 2.0 * 0.15 * 2.0]);
        assert!(matches!(regularization(&face, Some(&[1.0]), 0.15, 0.01), Err(Error::DimensionMismatch { .. })));
    }
}
