//! Synthetic assets: the `sphere_head` model and random ground-truth
//! scenes used by the self-verification suites.
//!
//! The model lives in a camera-aligned frame: +x right, +y down, and the
//! face looks toward -z, so an identity camera rotation with positive
//! z translation views it frontally.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::camera::CameraParams;
use crate::fitter::Landmark2d;
use crate::model::{FaceParams, MorphableModel};
use crate::{Vec2, Vec3};

pub const SPHERE_HEAD_SUBDIVISIONS: u32 = 3;
pub const SPHERE_HEAD_ID: usize = 8;
pub const SPHERE_HEAD_EX: usize = 4;
const ASSET_SEED: u64 = 0x5EED_3D33;

/// Unit icosphere: 12 vertices subdivided `levels` times, outward winding.
pub fn icosphere(levels: u32) -> (Vec<Vec3>, Vec<[u32; 3]>) {
    let p = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vec3> = [
        (-1.0, p, 0.0),
        (1.0, p, 0.0),
        (-1.0, -p, 0.0),
        (1.0, -p, 0.0),
        (0.0, -1.0, p),
        (0.0, 1.0, p),
        (0.0, -1.0, -p),
        (0.0, 1.0, -p),
        (p, 0.0, -1.0),
        (p, 0.0, 1.0),
        (-p, 0.0, -1.0),
        (-p, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..levels {
        let mut cache = std::collections::HashMap::new();
        let mut midpoint = |a: u32, b: u32, verts: &mut Vec<Vec3>| -> u32 {
            let key = (a.min(b), a.max(b));
            *cache.entry(key).or_insert_with(|| {
                verts.push(((verts[a as usize] + verts[b as usize]) * 0.5).normalize());
                (verts.len() - 1) as u32
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    (verts, faces)
}

fn q(v: f64) -> f64 {
    v as f32 as f64
}

fn q3(v: Vec3) -> Vec3 {
    v.map(q)
}

/// Canonical frame (y up, face toward +z) to model frame (y down, face
/// toward -z): a half turn about x.
fn to_model_frame(v: Vec3) -> Vec3 {
    Vec3::new(v.x, -v.y, -v.z)
}

/// Head surface point for a unit direction in the canonical frame.
fn head_surface(d: &Vec3) -> Vec3 {
    let radii = Vec3::new(0.075, 0.1, 0.09);
    let base = d.component_mul(&radii);
    // nose ridge toward +z, slightly above the centre
    let nose_dir = Vec3::new(0.0, 0.05, 1.0).normalize();
    let nose = 0.022 * (-(1.0 - d.dot(&nose_dir)) / 0.02).exp();
    // brow ridge
    let brow_dir = Vec3::new(0.0, 0.35, 0.94).normalize();
    let brow = 0.006 * (-(1.0 - d.dot(&brow_dir)) / 0.05).exp() * (1.0 - d.x * d.x * 2.0).max(0.0);
    base + d * (nose + brow)
}

fn monomials(d: &Vec3) -> [f64; 9] {
    [d.x, d.y, d.z, d.x * d.y, d.y * d.z, d.x * d.z, d.x * d.x - d.y * d.y, 3.0 * d.z * d.z - 1.0, d.x * d.y * d.z]
}

/// Azimuthal uv layout: the face centre maps to (0.5, 0.5), the back of
/// the head to the unit-disk rim.
fn direction_uv(d: &Vec3) -> Vec2 {
    let theta = d.z.clamp(-1.0, 1.0).acos();
    let phi = d.y.atan2(d.x);
    let r = 0.5 * theta / std::f64::consts::PI;
    Vec2::new(0.5 + r * phi.cos(), 0.5 - r * phi.sin())
}

/// The synthetic test head: 642-vertex icosphere warped into a head-like
/// ellipsoid, 8 identity and 4 expression components, jaw skinning over
/// the lower face. Deterministic; every value is f32-representable so the
/// asset round-trips through the P3DM file bit-exactly.
pub fn sphere_head() -> MorphableModel {
    let (dirs, triangles) = icosphere(SPHERE_HEAD_SUBDIVISIONS);
    let n = dirs.len();
    let mut rng = ChaCha8Rng::seed_from_u64(ASSET_SEED);

    let template: Vec<Vec3> = dirs.iter().map(|d| q3(to_model_frame(head_surface(d)))).collect();

    // identity: smooth random fields, radial plus a smaller tangential part
    let mut id_basis = vec![0.0; n * 3 * SPHERE_HEAD_ID];
    for k in 0..SPHERE_HEAD_ID {
        let radial: [f64; 9] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let tang: [Vec3; 3] = std::array::from_fn(|_| Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let field: Vec<Vec3> = dirs
            .iter()
            .map(|d| {
                let m = monomials(d);
                let r: f64 = m.iter().zip(&radial).map(|(a, b)| a * b).sum();
                let t = tang[0] * d.x + tang[1] * d.y + tang[2] * d.z;
                let t = t - d * d.dot(&t);
                d * r + 0.3 * t
            })
            .collect();
        let rms = (field.iter().map(|v| v.norm_squared()).sum::<f64>() / n as f64).sqrt();
        let scale = 0.008 / rms;
        for (i, f) in field.iter().enumerate() {
            let v = to_model_frame(f * scale);
            for c in 0..3 {
                id_basis[(i * 3 + c) * SPHERE_HEAD_ID + k] = q(v[c]);
            }
        }
    }

    // expression: localized around the mouth in the canonical frame
    let mouth = Vec3::new(0.0, -0.45, 0.89).normalize();
    let mut ex_basis = vec![0.0; n * 3 * SPHERE_HEAD_EX];
    for (i, d) in dirs.iter().enumerate() {
        let w = (-(1.0 - d.dot(&mouth)) / 0.06).exp();
        let fields = [
            // mouth stretch
            Vec3::new(d.x * 0.08, 0.0, 0.0) * w,
            // lips forward
            Vec3::new(0.0, 0.0, 0.006) * w,
            // lower lip down / upper lip up
            Vec3::new(0.0, (d.y - mouth.y) * 0.05, 0.0) * w,
            // asymmetric corner raise
            Vec3::new(0.0, d.x.max(0.0) * 0.06, 0.0) * w,
        ];
        for (k, f) in fields.iter().enumerate() {
            let v = to_model_frame(*f);
            for c in 0..3 {
                ex_basis[(i * 3 + c) * SPHERE_HEAD_EX + k] = q(v[c]);
            }
        }
    }

    let jaw_joint = q3(to_model_frame(Vec3::new(0.0, -0.01, -0.02)));
    let jaw_weights: Vec<f64> = dirs
        .iter()
        .map(|d| {
            let below = ((-d.y - 0.15) / 0.35).clamp(0.0, 1.0);
            let front = ((d.z + 0.2) / 0.5).clamp(0.0, 1.0);
            let w = below * front;
            q(w * w * (3.0 - 2.0 * w))
        })
        .collect();
    let vertex_uv: Vec<Vec2> = dirs.iter().map(|d| direction_uv(d).map(q)).collect();

    let landmark_dirs = [
        (0.0, 0.05, 1.0),
        (0.0, -0.2, 1.0),
        (-0.35, 0.3, 0.9),
        (0.35, 0.3, 0.9),
        (-0.2, 0.3, 0.95),
        (0.2, 0.3, 0.95),
        (-0.3, 0.5, 0.8),
        (0.3, 0.5, 0.8),
        (-0.25, -0.45, 0.85),
        (0.25, -0.45, 0.85),
        (0.0, -0.38, 0.92),
        (0.0, -0.55, 0.83),
        (0.0, -0.8, 0.6),
        (-0.5, -0.6, 0.6),
        (0.5, -0.6, 0.6),
        (-0.75, -0.2, 0.6),
        (0.75, -0.2, 0.6),
        (-0.12, -0.15, 0.98),
        (0.12, -0.15, 0.98),
    ];
    let landmark_vertex_ids = landmark_dirs
        .iter()
        .map(|&(x, y, z)| {
            let t = Vec3::new(x, y, z).normalize();
            let mut best = 0;
            for (i, d) in dirs.iter().enumerate() {
                if d.dot(&t) > dirs[best].dot(&t) {
                    best = i;
                }
            }
            best as u32
        })
        .collect();

    MorphableModel {
        template_vertices: template,
        triangles,
        n_id: SPHERE_HEAD_ID,
        n_ex: SPHERE_HEAD_EX,
        id_basis,
        ex_basis,
        jaw_joint,
        jaw_weights,
        vertex_uv,
        landmark_vertex_ids,
    }
}

/// Sampling ranges for random synthetic scenes.
#[derive(Debug, Clone)]
pub struct SceneSampler {
    pub width: u32,
    pub height: u32,
    /// Identity coefficients are drawn uniformly from `[-id_range, id_range]`.
    pub id_range: f64,
    pub ex_range: f64,
    pub jaw_range: f64,
    /// Per-axis head rotation range (radians).
    pub rotation_range: f64,
    /// Focal length is `nominal_focal * width * (1 + U(-focal_jitter, focal_jitter))`.
    pub nominal_focal: f64,
    pub focal_jitter: f64,
    /// Fraction of the image width the head spans at the nominal framing.
    pub framing: f64,
    pub depth_jitter: f64,
    pub lateral_range: f64,
    pub principal_jitter: f64,
}

impl Default for SceneSampler {
    fn default() -> Self {
        SceneSampler {
            width: 256,
            height: 256,
            id_range: 0.35,
            ex_range: 0.6,
            jaw_range: 0.12,
            rotation_range: 0.25,
            nominal_focal: 2.0,
            focal_jitter: 0.15,
            framing: 0.6,
            depth_jitter: 0.05,
            lateral_range: 0.015,
            principal_jitter: 0.02,
        }
    }
}

/// A random ground-truth face and camera.
#[derive(Debug, Clone)]
pub struct Scene {
    pub face: FaceParams,
    pub cam: CameraParams,
}

impl SceneSampler {
    pub fn sample(&self, model: &MorphableModel, seed: u64) -> Scene {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let face = FaceParams {
            z_id: (0..model.n_id).map(|_| rng.gen_range(-self.id_range..=self.id_range)).collect(),
            z_ex: (0..model.n_ex).map(|_| rng.gen_range(-self.ex_range..=self.ex_range)).collect(),
            jaw_theta: [rng.gen_range(0.0..=self.jaw_range), 0.0, 0.0],
        };
        let w = self.width as f64;
        let focal = self.nominal_focal * w * (1.0 + rng.gen_range(-self.focal_jitter..=self.focal_jitter));
        let extent = head_width(model);
        let depth = focal * extent / (self.framing * w) * (1.0 + rng.gen_range(-self.depth_jitter..=self.depth_jitter));
        let rotation = [
            rng.gen_range(-self.rotation_range..=self.rotation_range),
            rng.gen_range(-self.rotation_range..=self.rotation_range),
            rng.gen_range(-self.rotation_range..=self.rotation_range) * 0.5,
        ];
        let translation = [
            rng.gen_range(-self.lateral_range..=self.lateral_range),
            rng.gen_range(-self.lateral_range..=self.lateral_range),
            depth,
        ];
        let pj = self.principal_jitter * w;
        let cam = CameraParams {
            rotation,
            translation,
            focal_length: focal,
            principal_point: [
                0.5 * w + rng.gen_range(-pj..=pj),
                0.5 * self.height as f64 + rng.gen_range(-pj..=pj),
            ],
        };
        Scene { face, cam }
    }
}

/// Template width along x (meters).
pub fn head_width(model: &MorphableModel) -> f64 {
    let (lo, hi) = model
        .template_vertices
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v.x), hi.max(v.x)));
    hi - lo
}

/// Length of the axis-aligned bounding-box diagonal of a vertex set.
pub fn bbox_diagonal(vertices: &[Vec3]) -> f64 {
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for v in vertices {
        lo = lo.inf(v);
        hi = hi.sup(v);
    }
    (hi - lo).norm()
}

/// Projections of the model's landmark vertices.
pub fn project_landmarks(model: &MorphableModel, vertices: &[Vec3], cam: &CameraParams) -> Vec<Landmark2d> {
    model
        .landmark_vertex_ids
        .iter()
        .map(|&v| {
            let p = cam.pixel_of(&cam.to_camera(&vertices[v as usize]));
            Landmark2d {
                vertex: v,
                pixel: [p.x, p.y],
            }
        })
        .collect()
}
