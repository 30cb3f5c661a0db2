//! Full single-image energy with analytic gradients.
//!
//! One evaluation runs forward -> camera transform -> rasterization ->
//! visibility -> losses, then backpropagates. Within an evaluation the
//! pixel-to-triangle assignment, the visibility flags and the
//! correspondence targets are constants; the perspective-correct
//! barycentrics of each covered pixel are differentiated through the
//! pixel ray, so the normal term sees vertex motion inside a triangle.

use rayon::prelude::*;

use super::losses::{regularization, sgn, Landmark2d};
use super::{FitConfig, FitInputs};
use crate::camera::{pixel_wrt_camera_point, CameraParams, MIN_DEPTH};
use crate::correspond::{build_uv_index, find_correspondences, CorrespondenceSet};
use crate::error::Result;
use crate::model::{normal_sums, vertex_normals_pullback, FaceGradient, FaceParams, MorphableModel};
use crate::raster::{rasterize_camera_space, visible_from_camera_points, FragmentBuffer};
use crate::rotation;
use crate::{Mat3, Vec2, Vec3};

const BAND_ROWS: usize = 16;

/// Gradient with respect to the camera parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraGradient {
    pub rotation: Vec3,
    pub translation: Vec3,
    pub focal_length: f64,
    pub principal_point: Vec2,
}

impl CameraGradient {
    pub fn zeros() -> Self {
        CameraGradient {
            rotation: Vec3::zeros(),
            translation: Vec3::zeros(),
            focal_length: 0.0,
            principal_point: Vec2::zeros(),
        }
    }
}

/// Per-term values at one evaluation. `total` is the weighted energy.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct TermBreakdown {
    pub uv: f64,
    pub normal: f64,
    pub regularization: f64,
    pub landmark: f64,
    pub total: f64,
    /// Vertices that were accepted and visible.
    pub uv_vertices: usize,
    /// Pixels entering the normal term.
    pub normal_pixels: usize,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub energy: f64,
    pub terms: TermBreakdown,
    pub face_grad: FaceGradient,
    pub cam_grad: CameraGradient,
}

/// Per-image data that does not depend on the unknowns: correspondences
/// only depend on the predicted uv map and the template uv, so they are
/// computed once.
pub struct EnergyContext<'a> {
    pub model: &'a MorphableModel,
    pub inputs: &'a FitInputs,
    pub corr: Option<CorrespondenceSet>,
    pub weights: EnergyWeights,
    // pixels valid in predicted normals and mask
    normal_valid: Vec<bool>,
}

/// Term weights of the energy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyWeights {
    pub uv: f64,
    pub normal: f64,
    pub id: f64,
    pub ex: f64,
    pub landmark: f64,
}

impl EnergyWeights {
    pub fn from_config(c: &FitConfig) -> Self {
        EnergyWeights {
            uv: c.lambda_uv,
            normal: c.lambda_n,
            id: c.lambda_id,
            ex: c.lambda_ex,
            landmark: c.lambda_lmk,
        }
    }
}

impl<'a> EnergyContext<'a> {
    pub fn new(model: &'a MorphableModel, inputs: &'a FitInputs, config: &FitConfig) -> Result<Self> {
        inputs.validate(model)?;
        let weights = EnergyWeights::from_config(config);
        let corr = if weights.uv > 0.0 {
            let index = build_uv_index(&inputs.uv_map, &inputs.mask)?;
            Some(find_correspondences(model, &index, config.delta_uv))
        } else {
            None
        };
        let normal_valid = (0..inputs.normal_map.num_pixels())
            .map(|i| inputs.normal_map.valid[i] && inputs.mask.valid[i])
            .collect();
        Ok(EnergyContext {
            model,
            inputs,
            corr,
            weights,
            normal_valid,
        })
    }

    pub fn width(&self) -> usize {
        self.inputs.normal_map.width
    }

    pub fn height(&self) -> usize {
        self.inputs.normal_map.height
    }

    /// Energy and gradients at `(face, cam)`.
    pub fn evaluate(&self, face: &FaceParams, cam: &CameraParams) -> Result<Evaluation> {
        let model = self.model;
        let w = &self.weights;
        let vertices = model.forward(face)?;
        let jac = model.forward_jacobian(face)?;
        let rot = cam.rotation_matrix();
        let drot = rotation::exp_derivatives(&cam.omega());
        let t = cam.t();
        let cam_pts: Vec<Vec3> = vertices.iter().map(|p| rot * p + t).collect();
        let n = vertices.len();

        let mut grad_cam_pts = vec![Vec3::zeros(); n];
        let mut cam_grad = CameraGradient::zeros();
        let mut terms = TermBreakdown {
            uv: 0.0,
            normal: 0.0,
            regularization: 0.0,
            landmark: 0.0,
            total: 0.0,
            uv_vertices: 0,
            normal_pixels: 0,
        };

        let need_raster = w.uv > 0.0 || w.normal > 0.0;
        let frags = need_raster.then(|| rasterize_camera_space(&cam_pts, &model.triangles, cam, self.width(), self.height()));

        // 2D vertex term
        if let (Some(corr), Some(frags)) = (&self.corr, &frags) {
            let visible = visible_from_camera_points(&model.triangles, &cam_pts, cam, frags);
            let contributing: Vec<usize> = (0..n)
                .filter(|&i| corr.items[i].accepted && visible[i] && cam_pts[i].z > MIN_DEPTH)
                .collect();
            terms.uv_vertices = contributing.len();
            if !contributing.is_empty() {
                let inv = 1.0 / contributing.len() as f64;
                let mut loss = 0.0;
                for &i in &contributing {
                    let pc = cam_pts[i];
                    let d = cam.pixel_of(&pc) - corr.items[i].target_pixel;
                    loss += d.x.abs() + d.y.abs();
                    let g = Vec2::new(sgn(d.x), sgn(d.y)) * (inv * w.uv);
                    self.pixel_backprop(&pc, &g, cam, &mut grad_cam_pts[i], &mut cam_grad);
                }
                terms.uv = loss * inv;
            }
        }

        // sparse landmarks
        if w.landmark > 0.0 {
            if let Some(lmks) = self.inputs.landmarks2d.as_deref().filter(|l| !l.is_empty()) {
                let (loss, grads) = landmark_term(lmks, &cam_pts, cam)?;
                terms.landmark = loss;
                for (i, g) in grads {
                    self.pixel_backprop(&cam_pts[i], &(g * w.landmark), cam, &mut grad_cam_pts[i], &mut cam_grad);
                }
            }
        }

        // normal term
        let mut grad_vertices = vec![Vec3::zeros(); n];
        if let (true, Some(frags)) = (w.normal > 0.0, &frags) {
            let sums = normal_sums(&vertices, &model.triangles);
            let normals: Vec<Vec3> = sums
                .iter()
                .map(|s| {
                    let l = s.norm();
                    if l > 0.0 {
                        s / l
                    } else {
                        Vec3::zeros()
                    }
                })
                .collect();
            let cam_normals: Vec<Vec3> = normals.iter().map(|n| rot * n).collect();
            let nt = self.normal_term(frags, &cam_pts, &cam_normals, cam);
            terms.normal = nt.loss;
            terms.normal_pixels = nt.pixels;
            if nt.pixels > 0 {
                let scale = w.normal;
                for i in 0..n {
                    grad_cam_pts[i] += nt.grad_cam_pts[i] * scale;
                }
                cam_grad.focal_length += nt.grad_focal * scale;
                cam_grad.principal_point += nt.grad_principal * scale;
                // camera-frame normals -> model normals and camera rotation
                let grad_normals: Vec<Vec3> = nt.grad_cam_normals.iter().map(|g| rot.transpose() * (g * scale)).collect();
                for (k, dr) in drot.iter().enumerate() {
                    cam_grad.rotation[k] += normals
                        .iter()
                        .zip(&nt.grad_cam_normals)
                        .map(|(nm, g)| (dr * nm).dot(g) * scale)
                        .sum::<f64>();
                }
                grad_vertices = vertex_normals_pullback(&vertices, &model.triangles, &sums, &grad_normals);
            }
        }

        // camera-frame point gradients -> vertices, rotation, translation
        for i in 0..n {
            let g = grad_cam_pts[i];
            if g == Vec3::zeros() {
                continue;
            }
            grad_vertices[i] += rot.transpose() * g;
            cam_grad.translation += g;
            for k in 0..3 {
                cam_grad.rotation[k] += (drot[k] * vertices[i]).dot(&g);
            }
        }

        let mut face_grad = jac.pullback(&grad_vertices);
        let (reg, reg_grad) = regularization(face, self.inputs.mica_identity.as_deref(), w.id, w.ex)?;
        terms.regularization = reg;
        for (a, b) in face_grad.z_id.iter_mut().zip(&reg_grad.z_id) {
            *a += b;
        }
        for (a, b) in face_grad.z_ex.iter_mut().zip(&reg_grad.z_ex) {
            *a += b;
        }
        terms.total = w.uv * terms.uv + w.normal * terms.normal + reg + w.landmark * terms.landmark;
        Ok(Evaluation {
            energy: terms.total,
            terms,
            face_grad,
            cam_grad,
        })
    }

    /// Chain a pixel-space gradient at camera point `pc` into the point
    /// and the intrinsics.
    fn pixel_backprop(&self, pc: &Vec3, g: &Vec2, cam: &CameraParams, grad_pt: &mut Vec3, cam_grad: &mut CameraGradient) {
        let d = pixel_wrt_camera_point(pc, cam.focal_length);
        *grad_pt += d.transpose() * g;
        cam_grad.focal_length += g.x * pc.x / pc.z + g.y * pc.y / pc.z;
        cam_grad.principal_point += g;
    }

    fn normal_term(&self, frags: &FragmentBuffer, cam_pts: &[Vec3], cam_normals: &[Vec3], cam: &CameraParams) -> NormalTerm {
        let width = frags.width;
        let pixels: usize = (0..frags.triangle_id.len())
            .filter(|&i| frags.triangle_id[i] >= 0 && self.normal_valid[i])
            .count();
        let n = cam_pts.len();
        if pixels == 0 {
            return NormalTerm::empty(n);
        }
        let scale = 1.0 / (3 * pixels) as f64;
        let pred = &self.inputs.normal_map;
        let tris = &self.model.triangles;
        let bands: Vec<NormalTerm> = (0..frags.height.div_ceil(BAND_ROWS))
            .into_par_iter()
            .map(|band| {
                let mut acc = NormalTerm::empty(n);
                let y0 = band * BAND_ROWS;
                let y1 = (y0 + BAND_ROWS).min(frags.height);
                for idx in y0 * width..y1 * width {
                    let tid = frags.triangle_id[idx];
                    if tid < 0 || !self.normal_valid[idx] {
                        continue;
                    }
                    let tri = tris[tid as usize].map(|v| v as usize);
                    let p = tri.map(|v| cam_pts[v]);
                    let pixel = Vec2::new((idx % width) as f64 + 0.5, (idx / width) as f64 + 0.5);
                    let ray = cam.ray(&pixel);
                    let m = Mat3::from_columns(&p);
                    let Some(m_inv) = m.try_inverse() else { continue };
                    let u = m_inv * ray;
                    let s = u.sum();
                    let b = u / s;
                    let nc = tri.map(|v| cam_normals[v]);
                    let mix = b[0] * nc[0] + b[1] * nc[1] + b[2] * nc[2];
                    let len = mix.norm();
                    if len == 0.0 {
                        continue;
                    }
                    let r = mix / len;
                    let target = pred.pixel(idx);
                    let mut g_r = Vec3::zeros();
                    for c in 0..3 {
                        let diff = r[c] - target[c] as f64;
                        acc.loss += diff.abs();
                        g_r[c] = sgn(diff) * scale;
                    }
                    acc.pixels += 1;
                    let g_mix = (g_r - r * r.dot(&g_r)) / len;
                    for k in 0..3 {
                        acc.grad_cam_normals[tri[k]] += g_mix * b[k];
                    }
                    // barycentrics b = u / sum(u), u = M^-1 ray
                    let g_b = Vec3::new(g_mix.dot(&nc[0]), g_mix.dot(&nc[1]), g_mix.dot(&nc[2]));
                    let g_u = (g_b - Vec3::repeat(b.dot(&g_b))) / s;
                    let h = m_inv.transpose() * g_u;
                    for k in 0..3 {
                        acc.grad_cam_pts[tri[k]] -= h * u[k];
                    }
                    // ray = ((px - ppx) / f, (py - ppy) / f, 1)
                    let f = cam.focal_length;
                    acc.grad_focal -= (h.x * ray.x + h.y * ray.y) / f;
                    acc.grad_principal -= Vec2::new(h.x, h.y) / f;
                }
                acc
            })
            .collect();
        let mut total = NormalTerm::empty(n);
        for b in bands {
            total.loss += b.loss;
            total.pixels += b.pixels;
            total.grad_focal += b.grad_focal;
            total.grad_principal += b.grad_principal;
            for i in 0..n {
                total.grad_cam_pts[i] += b.grad_cam_pts[i];
                total.grad_cam_normals[i] += b.grad_cam_normals[i];
            }
        }
        total.loss *= scale;
        total
    }
}

struct NormalTerm {
    loss: f64,
    pixels: usize,
    grad_cam_pts: Vec<Vec3>,
    grad_cam_normals: Vec<Vec3>,
    grad_focal: f64,
    grad_principal: Vec2,
}

impl NormalTerm {
    fn empty(n: usize) -> Self {
        NormalTerm {
            loss: 0.0,
            pixels: 0,
            grad_cam_pts: vec![Vec3::zeros(); n],
            grad_cam_normals: vec![Vec3::zeros(); n],
            grad_focal: 0.0,
            grad_principal: Vec2::zeros(),
        }
    }
}

/// Mean L1 landmark distance; gradients keyed by vertex, in input order.
fn landmark_term(lmks: &[Landmark2d], cam_pts: &[Vec3], cam: &CameraParams) -> Result<(f64, Vec<(usize, Vec2)>)> {
    let projected: Vec<Vec2> = cam_pts.iter().map(|p| cam.pixel_of(p)).collect();
    let (loss, grad) = super::losses::landmark_loss(lmks, &projected)?;
    let mut out: Vec<(usize, Vec2)> = Vec::new();
    for l in lmks {
        let i = l.vertex as usize;
        if !out.iter().any(|(j, _)| *j == i) {
            out.push((i, grad[i]));
        }
    }
    Ok((loss, out))
}

/// Convenience wrapper: builds the per-image context and evaluates once.
pub fn energy_and_gradients(
    model: &MorphableModel,
    face: &FaceParams,
    cam: &CameraParams,
    inputs: &FitInputs,
    config: &FitConfig,
) -> Result<Evaluation> {
    EnergyContext::new(model, inputs, config)?.evaluate(face, cam)
}
