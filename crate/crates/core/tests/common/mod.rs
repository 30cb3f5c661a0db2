#![allow(dead_code)]

use facefit::raster::{render_maps, visible_vertices};
use facefit::synth::{bbox_diagonal, project_landmarks, Scene, SceneSampler};
use facefit::fitter::FitInputs as Inputs;
use facefit::{FaceParams, MorphableModel, Vec3};

/// A rendered ground-truth scene with everything the recovery checks need.
pub struct Case {
    pub seed: u64,
    pub scene: Scene,
    pub gt_vertices: Vec<Vec3>,
    pub visible: Vec<bool>,
    pub inputs: Inputs,
    pub diag: f64,
}

pub fn make_case(model: &MorphableModel, sampler: &SceneSampler, seed: u64) -> Case {
    let scene = sampler.sample(model, seed);
    let (w, h) = (sampler.width as usize, sampler.height as usize);
    let maps = render_maps(model, &scene.face, &scene.cam, w, h).unwrap();
    let visible = visible_vertices(model, &maps.vertices, &scene.cam, &maps.fragments);
    let mut inputs = Inputs::new(maps.uv_map.clone(), maps.normal_map.clone(), maps.mask());
    inputs.landmarks2d = Some(project_landmarks(model, &maps.vertices, &scene.cam));
    let diag = bbox_diagonal(&maps.vertices);
    Case {
        seed,
        scene,
        gt_vertices: maps.vertices,
        visible,
        inputs,
        diag,
    }
}

/// Frames with sinusoidal expressions, an opening jaw and a slow head turn
/// around the scene sampled from `seed`; identity and intrinsics stay fixed.
pub fn smooth_sequence(model: &MorphableModel, sampler: &SceneSampler, seed: u64, frames: usize) -> Vec<Case> {
    let base = sampler.sample(model, seed);
    let (w, h) = (sampler.width as usize, sampler.height as usize);
    (0..frames)
        .map(|t| {
            let s = t as f64 / (frames - 1) as f64;
            let mut face = base.face.clone();
            for (k, z) in face.z_ex.iter_mut().enumerate() {
                *z += 0.3 * (std::f64::consts::PI * (s + 0.25 * k as f64)).sin();
            }
            face.jaw_theta[0] = (base.face.jaw_theta[0] + 0.05 * s).max(0.0);
            let mut cam = base.cam.clone();
            cam.rotation[1] += 0.1 * s;
            cam.translation[0] += 0.004 * s;
            let maps = render_maps(model, &face, &cam, w, h).unwrap();
            let visible = visible_vertices(model, &maps.vertices, &cam, &maps.fragments);
            Case {
                seed: t as u64,
                inputs: Inputs::new(maps.uv_map.clone(), maps.normal_map.clone(), maps.mask()),
                diag: bbox_diagonal(&maps.vertices),
                scene: Scene { face, cam },
                gt_vertices: maps.vertices,
                visible,
            }
        })
        .collect()
}

/// Model-space RMSE over the vertices visible in the ground-truth render.
pub fn visible_rmse(model: &MorphableModel, face: &FaceParams, case: &Case) -> f64 {
    let v = model.forward(face).unwrap();
    let mut sum = 0.0;
    let mut n = 0usize;
    for (i, &vis) in case.visible.iter().enumerate() {
        if vis {
            sum += (v[i] - case.gt_vertices[i]).norm_squared();
            n += 1;
        }
    }
    (sum / n as f64).sqrt()
}

pub fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Axis-angle to matrix by Rodrigues' formula, written independently of the
/// library's exponential map.
pub fn rodrigues(w: [f64; 3]) -> nalgebra::Matrix3<f64> {
    let th = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
    if th == 0.0 {
        return nalgebra::Matrix3::identity();
    }
    let k = [w[0] / th, w[1] / th, w[2] / th];
    let kx = nalgebra::Matrix3::new(0.0, -k[2], k[1], k[2], 0.0, -k[0], -k[1], k[0], 0.0);
    nalgebra::Matrix3::identity() + kx * th.sin() + kx * kx * (1.0 - th.cos())
}
