//! Deterministic z-buffered software rasterizer.
//!
//! Triangles are culled when back-facing (camera-frame face normal pointing
//! away from the viewer) or when any vertex lies within [`NEAR_PLANE`] of
//! the camera plane. Coverage is tested at pixel centres with the top-left
//! fill rule; attributes use perspective-correct barycentrics. Rows are
//! split into bands that rasterize in parallel, each band owning its rows,
//! so the output does not depend on the thread count.

use rayon::prelude::*;

use crate::camera::CameraParams;
use crate::error::Result;
use crate::map::MapImage;
use crate::model::{vertex_normals, FaceParams, MorphableModel};
use crate::{Vec2, Vec3};

pub const NEAR_PLANE: f64 = 1e-6;
const BAND_ROWS: usize = 16;

/// Visibility depth tolerance relative to the scene bounding-box diagonal.
pub const VISIBILITY_EPS_REL: f64 = 1e-4;

/// Per-pixel rasterization result.
#[derive(Debug, Clone, PartialEq)]
pub struct FragmentBuffer {
    pub width: usize,
    pub height: usize,
    /// Triangle covering each pixel, -1 for background.
    pub triangle_id: Vec<i32>,
    /// Perspective-correct barycentrics in the triangle's vertex order.
    pub barycentric: Vec<[f64; 3]>,
    /// Camera-frame depth, `+inf` on background.
    pub depth: Vec<f64>,
}

impl FragmentBuffer {
    pub fn covered(&self, idx: usize) -> bool {
        self.triangle_id[idx] >= 0
    }

    pub fn covered_count(&self) -> usize {
        self.triangle_id.iter().filter(|&&t| t >= 0).count()
    }
}

// triangle ids, barycentrics and depths of one band of rows
type Band = (Vec<i32>, Vec<[f64; 3]>, Vec<f64>);

struct TriSetup {
    id: usize,
    // screen positions, reordered so the signed area is positive
    s: [Vec2; 3],
    inv_z: [f64; 3],
    area: f64,
    // position in the original triangle of each reordered vertex
    order: [usize; 3],
    top_left: [bool; 3],
    ymin: f64,
    ymax: f64,
    xmin: f64,
    xmax: f64,
}

#[inline]
fn edge(a: &Vec2, b: &Vec2, p: &Vec2) -> f64 {
    (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x)
}

fn is_top_left(a: &Vec2, b: &Vec2) -> bool {
    let e = b - a;
    (e.y == 0.0 && e.x > 0.0) || e.y < 0.0
}

/// Rasterizes world-space `vertices` seen through `cam`.
pub fn rasterize(
    vertices: &[Vec3],
    triangles: &[[u32; 3]],
    cam: &CameraParams,
    width: usize,
    height: usize,
) -> FragmentBuffer {
    let r = cam.rotation_matrix();
    let t = cam.t();
    let cam_pts: Vec<Vec3> = vertices.iter().map(|p| r * p + t).collect();
    rasterize_camera_space(&cam_pts, triangles, cam, width, height)
}

/// Rasterizes vertices already expressed in the camera frame.
pub fn rasterize_camera_space(
    cam_pts: &[Vec3],
    triangles: &[[u32; 3]],
    cam: &CameraParams,
    width: usize,
    height: usize,
) -> FragmentBuffer {
    let setups: Vec<TriSetup> = triangles
        .iter()
        .enumerate()
        .filter_map(|(id, tri)| setup_triangle(id, tri, cam_pts, cam))
        .collect();

    let bands: Vec<Band> = (0..height.div_ceil(BAND_ROWS))
        .into_par_iter()
        .map(|band| {
            let y0 = band * BAND_ROWS;
            let y1 = (y0 + BAND_ROWS).min(height);
            raster_band(&setups, width, y0, y1)
        })
        .collect();

    let mut out = FragmentBuffer {
        width,
        height,
        triangle_id: Vec::with_capacity(width * height),
        barycentric: Vec::with_capacity(width * height),
        depth: Vec::with_capacity(width * height),
    };
    for (ids, bary, depth) in bands {
        out.triangle_id.extend(ids);
        out.barycentric.extend(bary);
        out.depth.extend(depth);
    }
    out
}

fn setup_triangle(id: usize, tri: &[u32; 3], cam_pts: &[Vec3], cam: &CameraParams) -> Option<TriSetup> {
    let p = tri.map(|i| cam_pts[i as usize]);
    if p.iter().any(|q| q.z <= NEAR_PLANE) {
        return None;
    }
    let n = (p[1] - p[0]).cross(&(p[2] - p[0]));
    if n.dot(&p[0]) >= 0.0 {
        return None;
    }
    let s = p.map(|q| cam.pixel_of(&q));
    let mut order = [0, 1, 2];
    let mut area = edge(&s[0], &s[1], &s[2]);
    if area < 0.0 {
        order = [0, 2, 1];
        area = -area;
    }
    if area <= 0.0 || !area.is_finite() {
        return None;
    }
    let s = order.map(|k| s[k]);
    let inv_z = order.map(|k| 1.0 / p[k].z);
    let top_left = [
        is_top_left(&s[1], &s[2]),
        is_top_left(&s[2], &s[0]),
        is_top_left(&s[0], &s[1]),
    ];
    let (mut xmin, mut xmax, mut ymin, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for q in &s {
        xmin = xmin.min(q.x);
        xmax = xmax.max(q.x);
        ymin = ymin.min(q.y);
        ymax = ymax.max(q.y);
    }
    Some(TriSetup {
        id,
        s,
        inv_z,
        area,
        order,
        top_left,
        ymin,
        ymax,
        xmin,
        xmax,
    })
}

fn raster_band(setups: &[TriSetup], width: usize, y0: usize, y1: usize) -> (Vec<i32>, Vec<[f64; 3]>, Vec<f64>) {
    let rows = y1 - y0;
    let mut ids = vec![-1i32; rows * width];
    let mut bary = vec![[0.0; 3]; rows * width];
    let mut depth = vec![f64::INFINITY; rows * width];
    for tri in setups {
        // pixel centres c = i + 0.5 inside [min, max]
        let ys = (tri.ymin - 0.5).ceil().max(y0 as f64);
        let ye = (tri.ymax - 0.5).floor().min(y1 as f64 - 1.0);
        if ys > ye {
            continue;
        }
        let xs = (tri.xmin - 0.5).ceil().max(0.0);
        let xe = (tri.xmax - 0.5).floor().min(width as f64 - 1.0);
        if xs > xe {
            continue;
        }
        for y in ys as usize..=ye as usize {
            for x in xs as usize..=xe as usize {
                let p = Vec2::new(x as f64 + 0.5, y as f64 + 0.5);
                let e = [
                    edge(&tri.s[1], &tri.s[2], &p),
                    edge(&tri.s[2], &tri.s[0], &p),
                    edge(&tri.s[0], &tri.s[1], &p),
                ];
                let inside = e.iter().zip(&tri.top_left).all(|(&v, &tl)| v > 0.0 || (v == 0.0 && tl));
                if !inside {
                    continue;
                }
                let lam = e.map(|v| v / tri.area);
                let w = [lam[0] * tri.inv_z[0], lam[1] * tri.inv_z[1], lam[2] * tri.inv_z[2]];
                let sum = w[0] + w[1] + w[2];
                let z = 1.0 / sum;
                let idx = (y - y0) * width + x;
                if z < depth[idx] {
                    depth[idx] = z;
                    ids[idx] = tri.id as i32;
                    let mut b = [0.0; 3];
                    for k in 0..3 {
                        b[tri.order[k]] = w[k] / sum;
                    }
                    bary[idx] = b;
                }
            }
        }
    }
    (ids, bary, depth)
}

/// Rendered per-pixel cues for a posed model.
#[derive(Debug, Clone)]
pub struct RenderedMaps {
    /// Camera-frame unit normals (3 channels).
    pub normal_map: MapImage,
    /// Interpolated template uv (2 channels).
    pub uv_map: MapImage,
    /// Camera-frame depth (1 channel, `+inf` on background).
    pub depth_map: MapImage,
    pub fragments: FragmentBuffer,
    pub vertices: Vec<Vec3>,
}

pub fn render_maps(
    model: &MorphableModel,
    params: &FaceParams,
    cam: &CameraParams,
    width: usize,
    height: usize,
) -> Result<RenderedMaps> {
    let vertices = model.forward(params)?;
    render_vertices(model, vertices, cam, width, height)
}

/// Like [`render_maps`] for an explicit set of posed vertices.
pub fn render_vertices(
    model: &MorphableModel,
    vertices: Vec<Vec3>,
    cam: &CameraParams,
    width: usize,
    height: usize,
) -> Result<RenderedMaps> {
    let normals = vertex_normals(&vertices, &model.triangles)?;
    let rot = cam.rotation_matrix();
    let cam_normals: Vec<Vec3> = normals.iter().map(|n| rot * n).collect();
    let frags = rasterize(&vertices, &model.triangles, cam, width, height);

    let mut normal_map = MapImage::new(width, height, 3);
    let mut uv_map = MapImage::new(width, height, 2);
    let mut depth_map = MapImage::new(width, height, 1);
    depth_map.data.fill(f32::INFINITY);
    for idx in 0..width * height {
        let tid = frags.triangle_id[idx];
        if tid < 0 {
            continue;
        }
        let tri = model.triangles[tid as usize].map(|v| v as usize);
        let b = frags.barycentric[idx];
        let mut n = Vec3::zeros();
        let mut uv = Vec2::zeros();
        for k in 0..3 {
            n += b[k] * cam_normals[tri[k]];
            uv += b[k] * model.vertex_uv[tri[k]];
        }
        let n = n.normalize();
        normal_map.pixel_mut(idx).copy_from_slice(&[n.x as f32, n.y as f32, n.z as f32]);
        uv_map.pixel_mut(idx).copy_from_slice(&[uv.x as f32, uv.y as f32]);
        depth_map.pixel_mut(idx)[0] = frags.depth[idx] as f32;
        normal_map.valid[idx] = true;
        uv_map.valid[idx] = true;
        depth_map.valid[idx] = true;
    }
    Ok(RenderedMaps {
        normal_map,
        uv_map,
        depth_map,
        fragments: frags,
        vertices,
    })
}

impl RenderedMaps {
    /// Coverage mask of the render.
    pub fn mask(&self) -> MapImage {
        MapImage::from_mask(
            self.fragments.width,
            self.fragments.height,
            self.fragments.triangle_id.iter().map(|&t| t >= 0).collect(),
        )
    }
}

/// Per-vertex visibility: the vertex projects inside the image in front of
/// the camera, and either a triangle incident to it owns that pixel or its
/// depth is within `eps` of the rendered depth there.
pub fn visible_vertices(
    model: &MorphableModel,
    vertices: &[Vec3],
    cam: &CameraParams,
    frags: &FragmentBuffer,
) -> Vec<bool> {
    let r = cam.rotation_matrix();
    let t = cam.t();
    let cam_pts: Vec<Vec3> = vertices.iter().map(|p| r * p + t).collect();
    visible_from_camera_points(&model.triangles, &cam_pts, cam, frags)
}

/// Same as [`visible_vertices`] for points already in the camera frame.
pub fn visible_from_camera_points(
    triangles: &[[u32; 3]],
    cam_pts: &[Vec3],
    cam: &CameraParams,
    frags: &FragmentBuffer,
) -> Vec<bool> {
    let eps = VISIBILITY_EPS_REL * crate::synth::bbox_diagonal(cam_pts);
    cam_pts
        .iter()
        .enumerate()
        .map(|(i, pc)| {
            if pc.z <= 0.0 {
                return false;
            }
            let px = cam.pixel_of(pc);
            if !(px.x >= 0.0 && px.y >= 0.0 && px.x < frags.width as f64 && px.y < frags.height as f64) {
                return false;
            }
            let idx = px.y as usize * frags.width + px.x as usize;
            let tid = frags.triangle_id[idx];
            if tid >= 0 && triangles[tid as usize].contains(&(i as u32)) {
                return true;
            }
            pc.z <= frags.depth[idx] + eps
        })
        .collect()
}
