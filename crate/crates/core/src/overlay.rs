//! Per-pixel error maps: the distance from each visible surface point of a
//! mesh to a reference mesh, rendered through a camera.

use rayon::prelude::*;

use crate::camera::CameraParams;
use crate::evalbench::MeshSurface;
use crate::map::MapImage;
use crate::raster::rasterize;
use crate::Vec3;

/// One-channel map holding `scale * distance(surface point, reference)` on
/// covered pixels and NaN elsewhere. The surface point of a pixel is the
/// barycentric interpolation of its triangle's vertices.
pub fn error_map(
    vertices: &[Vec3],
    triangles: &[[u32; 3]],
    reference: &MeshSurface,
    cam: &CameraParams,
    width: usize,
    height: usize,
    scale: f64,
) -> MapImage {
    let frags = rasterize(vertices, triangles, cam, width, height);
    let values: Vec<Option<f32>> = (0..width * height)
        .into_par_iter()
        .map(|idx| {
            let tid = frags.triangle_id[idx];
            if tid < 0 {
                return None;
            }
            let b = frags.barycentric[idx];
            let tri = triangles[tid as usize];
            let p: Vec3 = (0..3).map(|k| b[k] * vertices[tri[k] as usize]).sum();
            Some((reference.nearest(&p).distance * scale) as f32)
        })
        .collect();
    let mut map = MapImage::new(width, height, 1);
    for (idx, v) in values.into_iter().enumerate() {
        if let Some(v) = v {
            map.data[idx] = v;
            map.valid[idx] = true;
        }
    }
    map
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plane(z: f64) -> (Vec<Vec3>, Vec<[u32; 3]>) {
        let v = vec![
            Vec3::new(-1.0, -1.0, z),
            Vec3::new(1.0, -1.0, z),
            Vec3::new(1.0, 1.0, z),
            Vec3::new(-1.0, 1.0, z),
        ];
        // faces the camera at the origin looking down +z
        (v, vec![[0, 2, 1], [0, 3, 2]])
    }

    #[test]
    fn identical_geometry_gives_zero() {
        let (v, t) = plane(4.0);
        let reference = MeshSurface::new(v.clone(), t.clone()).unwrap();
        let cam = CameraParams::frontal(20.0, [16.0, 16.0], 0.0);
        let m = error_map(&v, &t, &reference, &cam, 32, 32, 1000.0);
        assert!(m.count_valid() > 0);
        for i in 0..m.num_pixels() {
            if m.valid[i] {
                // only interpolation rounding, far below a nanometre
                assert!(m.data[i].abs() < 1e-9, "{}", m.data[i]);
            } else {
                assert!(m.data[i].is_nan());
            }
        }
    }

    #[test]
    fn offset_plane_gives_constant_map() {
        let (v, t) = plane(4.0);
        let (r, rt) = plane(4.003);
        let reference = MeshSurface::new(r, rt).unwrap();
        let cam = CameraParams::frontal(20.0, [16.0, 16.0], 0.0);
        let m = error_map(&v, &t, &reference, &cam, 32, 32, 1000.0);
        for i in 0..m.num_pixels() {
            if m.valid[i] {
                assert!((m.data[i] - 3.0).abs() < 1e-4, "{}", m.data[i]);
            }
        }
    }
}
