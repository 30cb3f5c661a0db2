//! Single-image fitting: energy assembly and a monotone Adam driver.

pub mod adam;
pub mod energy;
pub mod losses;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use adam::{adam_step, AdamConfig, AdamState};
pub use energy::{energy_and_gradients, CameraGradient, EnergyContext, EnergyWeights, Evaluation, TermBreakdown};
pub use losses::{landmark_loss, normal_loss, regularization, uv_vertex_loss, Landmark2d};

use crate::camera::CameraParams;
use crate::error::{Error, Result};
use crate::map::MapImage;
use crate::model::{FaceParams, MorphableModel};
use crate::Vec3;

/// Minimum accepted-and-visible vertices needed for the 2D vertex term.
pub const MIN_CORRESPONDENCES: usize = 10;

/// Optimization settings. Missing keys in a config file take the defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub lambda_uv: f64,
    pub lambda_n: f64,
    pub lambda_id: f64,
    pub lambda_ex: f64,
    pub lambda_lmk: f64,
    pub lr_id: f64,
    pub lr_ex: f64,
    pub lr_jaw: f64,
    /// Rate for all camera coordinates as laid out by [`Layout`]:
    /// rotation (rad), lateral offset over depth, depth (m), focal length
    /// and principal point in image widths.
    pub lr_cam: f64,
    pub steps: usize,
    pub delta_uv: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    /// Leading fraction of the steps that only moves the camera.
    pub cam_phase_fraction: f64,
    /// Initial focal length as a multiple of the image width.
    pub init_focal: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            lambda_uv: 2000.0,
            lambda_n: 200.0,
            lambda_id: 0.15,
            lambda_ex: 0.01,
            lambda_lmk: 0.0,
            lr_id: 0.001,
            lr_ex: 0.003,
            lr_jaw: 0.003,
            lr_cam: 0.001,
            steps: 500,
            delta_uv: crate::correspond::DEFAULT_DELTA_UV,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            cam_phase_fraction: 0.2,
            init_focal: 2.0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let weights = [
            ("lambda_uv", self.lambda_uv),
            ("lambda_n", self.lambda_n),
            ("lambda_id", self.lambda_id),
            ("lambda_ex", self.lambda_ex),
            ("lambda_lmk", self.lambda_lmk),
            ("lr_id", self.lr_id),
            ("lr_ex", self.lr_ex),
            ("lr_jaw", self.lr_jaw),
            ("lr_cam", self.lr_cam),
            ("delta_uv", self.delta_uv),
            ("adam_eps", self.adam_eps),
        ];
        for (field, v) in weights {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(field, "must be finite and non-negative"));
            }
        }
        if self.steps == 0 {
            return Err(invalid("steps", "must be positive"));
        }
        for (field, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(invalid(field, "must lie in [0, 1)"));
            }
        }
        if !(0.0..=1.0).contains(&self.cam_phase_fraction) {
            return Err(invalid("cam_phase_fraction", "must lie in [0, 1]"));
        }
        if !(self.init_focal.is_finite() && self.init_focal > 0.0) {
            return Err(invalid("init_focal", "must be positive"));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }

    /// Reads a TOML file, or JSON when the extension is `.json`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: FitConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| Error::Format {
                path: path.to_path_buf(),
                detail: e.to_string(),
            })?
        } else {
            toml::from_str(&text).map_err(|e| Error::Format {
                path: path.to_path_buf(),
                detail: e.to_string(),
            })?
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn invalid(field: &str, detail: &str) -> Error {
    Error::InvalidValue {
        field: field.into(),
        detail: detail.into(),
    }
}

/// Per-image observations.
#[derive(Debug, Clone)]
pub struct FitInputs {
    pub uv_map: MapImage,
    pub normal_map: MapImage,
    pub mask: MapImage,
    pub mica_identity: Option<Vec<f64>>,
    pub landmarks2d: Option<Vec<Landmark2d>>,
}

impl FitInputs {
    pub fn new(uv_map: MapImage, normal_map: MapImage, mask: MapImage) -> Self {
        FitInputs {
            uv_map,
            normal_map,
            mask,
            mica_identity: None,
            landmarks2d: None,
        }
    }

    pub fn validate(&self, model: &MorphableModel) -> Result<()> {
        self.uv_map.same_size(&self.normal_map, "normal map")?;
        self.uv_map.same_size(&self.mask, "mask")?;
        if self.uv_map.channels != 2 {
            return Err(Error::dim("uv map channels", 2, self.uv_map.channels));
        }
        if self.normal_map.channels != 3 {
            return Err(Error::dim("normal map channels", 3, self.normal_map.channels));
        }
        if let Some(m) = &self.mica_identity {
            if m.len() != model.n_id {
                return Err(Error::dim("mica identity", model.n_id, m.len()));
            }
        }
        if let Some(lmks) = &self.landmarks2d {
            for l in lmks {
                if l.vertex as usize >= model.num_vertices() {
                    return Err(Error::IndexOutOfRange {
                        field: "landmark vertex".into(),
                        index: l.vertex as usize,
                        len: model.num_vertices(),
                    });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub face: FaceParams,
    pub cam: CameraParams,
    /// Energy after each step.
    pub energy_trace: Vec<f64>,
    pub term_breakdown: TermBreakdown,
}

/// Flat parameter vector layout:
/// `z_id | z_ex | jaw (3) | rotation (3) | tx/tz, ty/tz, tz | f/(W tz) | pp/W (2)`.
///
/// Lateral translation and focal length are stored relative to the depth,
/// so moving the depth alone changes perspective strength but neither the
/// image position nor the image scale of the model origin. Intrinsics are
/// divided by the image width so one learning rate suits all camera
/// coordinates. With `relative_focal` off the focal slot holds `f/W`,
/// which keeps the focal length fixed when it is frozen or shared.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Layout {
    pub n_id: usize,
    pub n_ex: usize,
    pub width: f64,
    pub relative_focal: bool,
}

impl Layout {
    pub fn new(model: &MorphableModel, width: usize) -> Self {
        Layout {
            n_id: model.n_id,
            n_ex: model.n_ex,
            width: width as f64,
            relative_focal: true,
        }
    }

    /// Layout with the focal length stored as `f/W`.
    pub fn absolute_focal(model: &MorphableModel, width: usize) -> Self {
        Layout {
            relative_focal: false,
            ..Self::new(model, width)
        }
    }

    fn focal_unit(&self, tz: f64) -> f64 {
        if self.relative_focal {
            self.width * tz
        } else {
            self.width
        }
    }

    pub fn len(&self) -> usize {
        self.n_id + self.n_ex + 12
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn jaw(&self) -> usize {
        self.n_id + self.n_ex
    }

    pub fn rot(&self) -> usize {
        self.jaw() + 3
    }

    pub fn trans(&self) -> usize {
        self.jaw() + 6
    }

    pub fn focal(&self) -> usize {
        self.jaw() + 9
    }

    pub fn pp(&self) -> usize {
        self.jaw() + 10
    }

    pub fn pack(&self, face: &FaceParams, cam: &CameraParams) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.len());
        x.extend(&face.z_id);
        x.extend(&face.z_ex);
        x.extend(face.jaw_theta);
        x.extend(cam.rotation);
        let [tx, ty, tz] = cam.translation;
        x.extend([tx / tz, ty / tz, tz]);
        x.push(cam.focal_length / self.focal_unit(tz));
        x.extend(cam.principal_point.map(|p| p / self.width));
        x
    }

    pub fn unpack(&self, x: &[f64]) -> (FaceParams, CameraParams) {
        let j = self.jaw();
        let face = FaceParams {
            z_id: x[..self.n_id].to_vec(),
            z_ex: x[self.n_id..j].to_vec(),
            jaw_theta: [x[j], x[j + 1], x[j + 2]],
        };
        let (r, t, f, p) = (self.rot(), self.trans(), self.focal(), self.pp());
        let cam = CameraParams {
            rotation: [x[r], x[r + 1], x[r + 2]],
            translation: [x[t] * x[t + 2], x[t + 1] * x[t + 2], x[t + 2]],
            focal_length: x[f] * self.focal_unit(x[t + 2]),
            principal_point: [x[p] * self.width, x[p + 1] * self.width],
        };
        (face, cam)
    }

    /// Gradient of an evaluation at `cam` in the packed coordinates.
    pub fn gradient(&self, eval: &Evaluation, cam: &CameraParams) -> Vec<f64> {
        let mut g = Vec::with_capacity(self.len());
        g.extend(&eval.face_grad.z_id);
        g.extend(&eval.face_grad.z_ex);
        g.extend(eval.face_grad.jaw_theta.iter());
        g.extend(eval.cam_grad.rotation.iter());
        let [tx, ty, tz] = cam.translation;
        let gt = eval.cam_grad.translation;
        let gf = eval.cam_grad.focal_length;
        let via_focal = if self.relative_focal { gf * cam.focal_length } else { 0.0 };
        g.extend([gt.x * tz, gt.y * tz, gt.z + (gt.x * tx + gt.y * ty + via_focal) / tz]);
        g.push(gf * self.focal_unit(tz));
        g.extend(eval.cam_grad.principal_point.iter().map(|v| v * self.width));
        g
    }

    /// Per-parameter learning rates; frozen groups get zero.
    pub fn rates(&self, cfg: &FitConfig, groups: Groups) -> Vec<f64> {
        let mut lr = vec![0.0; self.len()];
        let mut set = |range: std::ops::Range<usize>, on: bool, v: f64| {
            if on {
                lr[range].fill(v);
            }
        };
        let j = self.jaw();
        set(0..self.n_id, groups.identity, cfg.lr_id);
        set(self.n_id..j, groups.expression, cfg.lr_ex);
        set(j..j + 3, groups.jaw, cfg.lr_jaw);
        set(self.rot()..self.focal(), groups.pose, cfg.lr_cam);
        set(self.focal()..self.len(), groups.intrinsics, cfg.lr_cam);
        lr
    }
}

/// Which parameter groups move.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Groups {
    pub identity: bool,
    pub expression: bool,
    pub jaw: bool,
    pub pose: bool,
    pub intrinsics: bool,
}

impl Groups {
    pub const ALL: Groups = Groups {
        identity: true,
        expression: true,
        jaw: true,
        pose: true,
        intrinsics: true,
    };
    pub const CAMERA: Groups = Groups {
        identity: false,
        expression: false,
        jaw: false,
        pose: true,
        intrinsics: true,
    };
    /// Everything that varies per video frame.
    pub const PER_FRAME: Groups = Groups {
        identity: false,
        expression: true,
        jaw: true,
        pose: true,
        intrinsics: false,
    };
}

/// Objective value, gradient, and whatever the caller wants to keep.
#[derive(Debug, Clone)]
pub struct Probe<T> {
    pub value: f64,
    pub grad: Vec<f64>,
    pub extra: T,
}

/// Plain Adam that remembers the best iterate seen. The energy is
/// piecewise smooth with L1 kinks, so individual steps may go uphill; the
/// caller gets the lowest point visited and a non-increasing trace.
pub struct AdamDriver {
    pub state: AdamState,
    pub cfg: AdamConfig,
    /// Multiplies every rate; halved when a step leaves the valid domain.
    pub scale: f64,
}

/// Current iterate and the best one so far.
#[derive(Debug, Clone)]
pub struct Track<T> {
    pub x: Vec<f64>,
    pub cur: Probe<T>,
    pub best_x: Vec<f64>,
    pub best: Probe<T>,
}

impl<T: Clone> Track<T> {
    pub fn new(x: Vec<f64>, probe: Probe<T>) -> Self {
        Track {
            best_x: x.clone(),
            best: probe.clone(),
            x,
            cur: probe,
        }
    }

    /// Restarts from the best iterate.
    pub fn rewind(&mut self) {
        self.x.clone_from(&self.best_x);
        self.cur = self.best.clone();
    }
}

impl AdamDriver {
    pub fn new(n: usize, cfg: AdamConfig) -> Self {
        AdamDriver {
            state: AdamState::new(n),
            cfg,
            scale: 1.0,
        }
    }

    /// One step. A proposal the objective rejects (invalid parameters) is
    /// dropped and the rate scale halves.
    pub fn step<T: Clone>(&mut self, track: &mut Track<T>, lrs: &[f64], mut eval: impl FnMut(&[f64]) -> Result<Probe<T>>) {
        let mut trial = track.x.clone();
        let scaled: Vec<f64> = lrs.iter().map(|l| l * self.scale).collect();
        adam_step(&mut self.state, &mut trial, &track.cur.grad, &scaled, &self.cfg);
        match eval(&trial) {
            Ok(p) if p.value.is_finite() => {
                if p.value < track.best.value {
                    track.best = p.clone();
                    track.best_x.clone_from(&trial);
                }
                track.x = trial;
                track.cur = p;
            }
            _ => self.scale *= 0.5,
        }
    }
}

/// Rough camera from the mask: principal point at the image centre, focal
/// length `init_focal * W`, and a translation that places the shaped
/// template's extent over the mask's bounding box.
pub fn initial_camera(model: &MorphableModel, face: &FaceParams, mask: &MapImage, init_focal: f64) -> Result<CameraParams> {
    let (w, h) = (mask.width, mask.height);
    let (mut x0, mut x1, mut y0, mut y1) = (usize::MAX, 0, usize::MAX, 0);
    let mut count = 0usize;
    let (mut sx, mut sy) = (0.0, 0.0);
    for y in 0..h {
        for x in 0..w {
            if mask.valid[y * w + x] {
                x0 = x0.min(x);
                x1 = x1.max(x);
                y0 = y0.min(y);
                y1 = y1.max(y);
                sx += x as f64 + 0.5;
                sy += y as f64 + 0.5;
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::EmptyMask);
    }
    let verts = model.shaped(face)?;
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for v in &verts {
        lo = lo.inf(v);
        hi = hi.sup(v);
    }
    let centre = (lo + hi) * 0.5;
    let extent = hi - lo;
    let f = init_focal * w as f64;
    let pp = [w as f64 * 0.5, h as f64 * 0.5];
    let box_w = (x1 + 1 - x0) as f64;
    let box_h = (y1 + 1 - y0) as f64;
    let depth = f * (extent.x * extent.y / (box_w * box_h)).sqrt();
    let cx = (sx / count as f64 - pp[0]) * depth / f;
    let cy = (sy / count as f64 - pp[1]) * depth / f;
    Ok(CameraParams {
        rotation: [0.0; 3],
        translation: [cx - centre.x, cy - centre.y, depth - centre.z],
        focal_length: f,
        principal_point: pp,
    })
}

/// Fits face and camera to one image: a camera-only phase over the first
/// `cam_phase_fraction` of the steps, then all unknowns.
pub fn fit_image(model: &MorphableModel, inputs: &FitInputs, config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    inputs.validate(model)?;
    let face = FaceParams {
        z_id: inputs.mica_identity.clone().unwrap_or_else(|| vec![0.0; model.n_id]),
        ..FaceParams::zeros(model)
    };
    let cam = initial_camera(model, &face, &inputs.mask, config.init_focal)?;
    fit_image_from(model, inputs, config, face, cam)
}

/// [`fit_image`] from an explicit starting point.
pub fn fit_image_from(
    model: &MorphableModel,
    inputs: &FitInputs,
    config: &FitConfig,
    face: FaceParams,
    cam: CameraParams,
) -> Result<FitResult> {
    config.validate()?;
    face.validate(model)?;
    cam.validate()?;
    let ctx = EnergyContext::new(model, inputs, config)?;
    if let Some(corr) = &ctx.corr {
        if corr.accepted_count() < MIN_CORRESPONDENCES {
            return Err(Error::NoCorrespondences {
                found: corr.accepted_count(),
                required: MIN_CORRESPONDENCES,
            });
        }
    }
    let cam_steps = (config.steps as f64 * config.cam_phase_fraction).round() as usize;
    let phases = [(cam_steps, Groups::CAMERA), (config.steps - cam_steps, Groups::ALL)];
    let out = run_phases(&ctx, config, Layout::new(model, ctx.width()), face, cam, &phases)?;
    if ctx.corr.is_some() && cam_steps > 0 && out.best_uv_vertices_phase1 < MIN_CORRESPONDENCES {
        return Err(Error::NoCorrespondences {
            found: out.best_uv_vertices_phase1,
            required: MIN_CORRESPONDENCES,
        });
    }
    Ok(out.result)
}

pub struct PhaseOutput {
    pub result: FitResult,
    pub best_uv_vertices_phase1: usize,
}

/// Runs consecutive optimization phases with the given frozen groups.
pub fn run_phases(
    ctx: &EnergyContext<'_>,
    config: &FitConfig,
    layout: Layout,
    face: FaceParams,
    cam: CameraParams,
    phases: &[(usize, Groups)],
) -> Result<PhaseOutput> {
    let probe = |x: &[f64]| -> Result<Probe<TermBreakdown>> {
        let (face, cam) = layout.unpack(x);
        face.validate(ctx.model)?;
        cam.validate()?;
        let e = ctx.evaluate(&face, &cam)?;
        Ok(Probe {
            value: e.energy,
            grad: layout.gradient(&e, &cam),
            extra: e.terms,
        })
    };
    let x = layout.pack(&face, &cam);
    let first = probe(&x)?;
    let mut best_uv = first.extra.uv_vertices;
    let mut track = Track::new(x, first);
    let mut trace = Vec::new();
    for (pi, &(steps, groups)) in phases.iter().enumerate() {
        // each phase starts from the best point of the previous one
        track.rewind();
        let lrs = layout.rates(config, groups);
        let mut opt = AdamDriver::new(layout.len(), config.adam());
        for _ in 0..steps {
            opt.step(&mut track, &lrs, probe);
            if pi == 0 {
                best_uv = best_uv.max(track.cur.extra.uv_vertices);
            }
            trace.push(track.best.value);
        }
    }
    let (face, cam) = layout.unpack(&track.best_x);
    Ok(PhaseOutput {
        result: FitResult {
            face,
            cam,
            energy_trace: trace,
            term_breakdown: track.best.extra,
        },
        best_uv_vertices_phase1: best_uv,
    })
}
