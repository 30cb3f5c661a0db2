//! Command-line interface.
//!
//! Exit codes: 0 success, 2 invalid input or I/O failure (including usage
//! errors), 3 too few correspondences to fit.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evalbench::{self, IcpConfig, MeshSurface, MetricsRecord};
use crate::fitter::{fit_image, FitConfig, FitInputs, FitResult};
use crate::io::{self, Mesh};
use crate::model::MorphableModel;
use crate::raster::render_maps;
use crate::synth::{project_landmarks, sphere_head, SceneSampler};
use crate::tracker::{load_frame_dir, track_sequence, TrackConfig, TrackManifest};
use crate::Vec3;

pub const EXIT_OK: i32 = 0;
pub const EXIT_BAD_INPUT: i32 = 2;
pub const EXIT_NO_CORRESPONDENCES: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "facefit", version, about = "Morphable face fitting from uv and normal maps")]
pub struct Cli {
    /// Worker threads (default: logical cores).
    #[arg(long, global = true, env = "FACEFIT_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render uv/normal/mask targets and the ground-truth mesh.
    Synth(SynthArgs),
    /// Fit one image.
    Fit(FitArgs),
    /// Track a frame sequence.
    Track(TrackArgs),
    /// Align a predicted mesh to a ground-truth scan and compute metrics.
    Eval(EvalArgs),
    /// Evaluate a list of subjects and write an aggregate CSV.
    EvalBatch(EvalBatchArgs),
    /// Render a per-pixel distance map against a reference mesh.
    PlotOverlay(OverlayArgs),
    /// Write the built-in synthetic head model.
    MakeAsset(MakeAssetArgs),
}

#[derive(Debug, Args)]
pub struct ModelArg {
    /// Model asset (.p3dm); the built-in synthetic head when omitted.
    #[arg(long)]
    pub model: Option<PathBuf>,
}

impl ModelArg {
    fn load(&self) -> Result<MorphableModel> {
        match &self.model {
            Some(p) => io::load_model(p),
            None => Ok(sphere_head()),
        }
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub model: ModelArg,
    /// Face parameters JSON; sampled from --seed when omitted.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Camera JSON; sampled from --seed when omitted.
    #[arg(long)]
    pub camera: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 256)]
    pub width: u32,
    #[arg(long, default_value_t = 256)]
    pub height: u32,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write gt_params.json, gt_camera.json and landmarks2d.json.
    #[arg(long)]
    pub write_gt: bool,
}

#[derive(Debug, Args, Default)]
pub struct FitOverrides {
    /// Config file (TOML, or JSON by extension).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub delta_uv: Option<f64>,
    #[arg(long)]
    pub lambda_uv: Option<f64>,
    #[arg(long)]
    pub lambda_n: Option<f64>,
    #[arg(long)]
    pub lambda_id: Option<f64>,
    #[arg(long)]
    pub lambda_ex: Option<f64>,
    #[arg(long)]
    pub lambda_lmk: Option<f64>,
}

impl FitOverrides {
    fn apply(&self, cfg: &mut FitConfig) -> Result<()> {
        let set = |dst: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *dst = v;
            }
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(s) = self.steps {
            cfg.steps = s;
        }
        set(&mut cfg.delta_uv, self.delta_uv);
        set(&mut cfg.lambda_uv, self.lambda_uv);
        set(&mut cfg.lambda_n, self.lambda_n);
        set(&mut cfg.lambda_id, self.lambda_id);
        set(&mut cfg.lambda_ex, self.lambda_ex);
        set(&mut cfg.lambda_lmk, self.lambda_lmk);
        cfg.validate()
    }

    fn fit_config(&self) -> Result<FitConfig> {
        let mut cfg = match &self.config {
            Some(p) => FitConfig::load(p)?,
            None => FitConfig::default(),
        };
        self.apply(&mut cfg)?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub model: ModelArg,
    #[arg(long)]
    pub uv: PathBuf,
    #[arg(long)]
    pub normal: PathBuf,
    #[arg(long)]
    pub mask: PathBuf,
    /// Identity prior JSON (array of coefficients).
    #[arg(long)]
    pub mica: Option<PathBuf>,
    /// Landmarks JSON: `[{"vertex": i, "pixel": [x, y]}, ...]`.
    #[arg(long)]
    pub landmarks: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: FitOverrides,
    /// Also write correspondences.csv.
    #[arg(long)]
    pub dump_correspondences: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    #[command(flatten)]
    pub model: ModelArg,
    /// Directory of frame_NNNNN.{uv.pfm,normal.pfm,mask.pgm}.
    #[arg(long)]
    pub frames: PathBuf,
    #[command(flatten)]
    pub overrides: FitOverrides,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    /// Landmark pairs JSON: `[{"vertex": i, "point": [x, y, z]}, ...]` in
    /// ground-truth millimetres.
    #[arg(long)]
    pub landmarks: PathBuf,
    /// Comma-separated region labels to keep (all points when omitted).
    #[arg(long, value_delimiter = ',')]
    pub mask_labels: Option<Vec<i32>>,
    /// Factor taking predicted mesh units to millimetres.
    #[arg(long, default_value_t = 1000.0)]
    pub pred_scale: f64,
    /// Factor taking ground-truth units to millimetres.
    #[arg(long, default_value_t = 1.0)]
    pub gt_scale: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalBatchArgs {
    /// JSON list of `{"subject", "split", "pred", "gt", "landmarks"}`;
    /// relative paths resolve against the list's directory.
    #[arg(long)]
    pub list: PathBuf,
    #[arg(long, value_delimiter = ',')]
    pub mask_labels: Option<Vec<i32>>,
    #[arg(long, default_value_t = 1000.0)]
    pub pred_scale: f64,
    #[arg(long, default_value_t = 1.0)]
    pub gt_scale: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct OverlayArgs {
    #[arg(long)]
    pub mesh: PathBuf,
    #[arg(long)]
    pub camera: PathBuf,
    #[arg(long)]
    pub reference: PathBuf,
    #[arg(long, default_value_t = 256)]
    pub width: u32,
    #[arg(long, default_value_t = 256)]
    pub height: u32,
    /// Factor applied to distances (mesh units to millimetres).
    #[arg(long, default_value_t = 1000.0)]
    pub scale: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MakeAssetArgs {
    #[arg(long)]
    pub out: PathBuf,
}

/// Landmark pair for evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LandmarkPair {
    pub vertex: u32,
    pub point: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchEntry {
    pub subject: String,
    pub split: String,
    pub pred: PathBuf,
    pub gt: PathBuf,
    pub landmarks: PathBuf,
}

/// Parses arguments from the process and runs; returns the exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_BAD_INPUT } else { EXIT_OK };
        }
    };
    run(cli)
}

pub fn run(cli: Cli) -> i32 {
    if let Some(n) = cli.threads {
        // the global pool can only be set once per process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NoCorrespondences { .. } => EXIT_NO_CORRESPONDENCES,
        _ => EXIT_BAD_INPUT,
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Synth(a) => cmd_synth(&a),
        Command::Fit(a) => cmd_fit(&a),
        Command::Track(a) => cmd_track(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::EvalBatch(a) => cmd_eval_batch(&a),
        Command::PlotOverlay(a) => cmd_plot_overlay(&a),
        Command::MakeAsset(a) => io::save_model(&a.out, &sphere_head()),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn model_mesh(model: &MorphableModel, vertices: Vec<Vec3>) -> Mesh {
    Mesh {
        vertices,
        triangles: model.triangles.clone(),
        uvs: model.vertex_uv.clone(),
    }
}

pub fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let model = a.model.load()?;
    let sampler = SceneSampler {
        width: a.width,
        height: a.height,
        ..SceneSampler::default()
    };
    let scene = sampler.sample(&model, a.seed);
    let face = match &a.params {
        Some(p) => io::load_face_params(p)?,
        None => scene.face,
    };
    face.validate(&model)?;
    let cam = match &a.camera {
        Some(p) => io::load_camera(p)?,
        None => scene.cam,
    };
    let maps = render_maps(&model, &face, &cam, a.width as usize, a.height as usize)?;
    create_dir(&a.out)?;
    io::save_map(a.out.join("uv.pfm"), &maps.uv_map)?;
    io::save_map(a.out.join("normal.pfm"), &maps.normal_map)?;
    io::save_mask(a.out.join("mask.pgm"), &maps.mask())?;
    if a.write_gt {
        io::save_face_params(a.out.join("gt_params.json"), &face)?;
        io::save_camera(a.out.join("gt_camera.json"), &cam)?;
        let lmks = project_landmarks(&model, &maps.vertices, &cam);
        io::save_json(a.out.join("landmarks2d.json"), &lmks)?;
    }
    io::save_mesh(a.out.join("gt_mesh.obj"), &model_mesh(&model, maps.vertices))
}

fn load_inputs(a: &FitArgs) -> Result<FitInputs> {
    let uv = io::load_map(&a.uv)?.truncate_channels(2)?;
    let mut inputs = FitInputs::new(uv, io::load_map(&a.normal)?, io::load_mask(&a.mask)?);
    if let Some(p) = &a.mica {
        inputs.mica_identity = Some(io::load_json(p)?);
    }
    if let Some(p) = &a.landmarks {
        inputs.landmarks2d = Some(io::load_json(p)?);
    }
    Ok(inputs)
}

fn write_fit(dir: &Path, prefix: &str, model: &MorphableModel, fit: &FitResult) -> Result<()> {
    io::save_face_params(dir.join(format!("{prefix}params.json")), &fit.face)?;
    io::save_camera(dir.join(format!("{prefix}camera.json")), &fit.cam)?;
    let vertices = model.forward(&fit.face)?;
    io::save_mesh(dir.join(format!("{prefix}mesh.obj")), &model_mesh(model, vertices))
}

fn trace_csv(trace: &[f64]) -> String {
    let mut s = String::from("step,energy\n");
    for (i, e) in trace.iter().enumerate() {
        let _ = writeln!(s, "{},{e}", i + 1);
    }
    s
}

pub fn cmd_fit(a: &FitArgs) -> Result<()> {
    let model = a.model.load()?;
    let cfg = a.overrides.fit_config()?;
    let inputs = load_inputs(a)?;
    inputs.validate(&model)?;
    create_dir(&a.out)?;
    if a.dump_correspondences {
        let index = crate::correspond::build_uv_index(&inputs.uv_map, &inputs.mask)?;
        let corr = crate::correspond::find_correspondences(&model, &index, cfg.delta_uv);
        let path = a.out.join("correspondences.csv");
        std::fs::write(&path, corr.to_csv()).map_err(|e| Error::io(&path, e))?;
    }
    let fit = fit_image(&model, &inputs, &cfg)?;
    write_fit(&a.out, "", &model, &fit)?;
    io::save_json(a.out.join("terms.json"), &fit.term_breakdown)?;
    let path = a.out.join("trace.csv");
    std::fs::write(&path, trace_csv(&fit.energy_trace)).map_err(|e| Error::io(&path, e))
}

pub fn cmd_track(a: &TrackArgs) -> Result<()> {
    let model = a.model.load()?;
    let mut cfg = match &a.overrides.config {
        Some(p) => TrackConfig::load(p)?,
        None => TrackConfig::default(),
    };
    a.overrides.apply(&mut cfg.fit)?;
    let frames = load_frame_dir(&a.frames)?;
    let res = track_sequence(&model, &frames, &cfg)?;
    create_dir(&a.out)?;
    for (t, f) in res.frames.iter().enumerate() {
        write_fit(&a.out, &format!("frame_{t:05}."), &model, f)?;
    }
    io::save_json(
        a.out.join("manifest.json"),
        &TrackManifest {
            frames: res.frames.len(),
            flagged: res.flagged,
            objective_trace: res.objective_trace,
        },
    )
}

/// Loads a predicted OBJ, a GT PLY and landmark pairs, then runs [`evalbench::evaluate`]
/// on the GT points whose label is in `keep`.
pub fn evaluate_files(
    pred: &Path,
    gt: &Path,
    landmarks: &Path,
    keep: Option<&[i32]>,
    pred_scale: f64,
    gt_scale: f64,
) -> Result<MetricsRecord> {
    let mesh = io::load_mesh(pred)?.scaled(pred_scale);
    let cloud = io::load_pointcloud(gt)?.scaled(gt_scale);
    let pairs: Vec<LandmarkPair> = io::load_json(landmarks)?;
    let pairs: Vec<(u32, Vec3)> = pairs.iter().map(|p| (p.vertex, Vec3::from(p.point))).collect();
    // alignment uses the kept region only
    let kept = evalbench::kept_indices(&cloud, keep);
    let masked = evalbench::PointCloud {
        points: kept.iter().map(|&i| cloud.points[i]).collect(),
        normals: kept.iter().map(|&i| cloud.normals[i]).collect(),
        labels: None,
    };
    if masked.is_empty() {
        return Err(Error::EmptyAfterMasking);
    }
    evalbench::evaluate(&mesh.vertices, &mesh.triangles, &masked, &pairs, None, &IcpConfig::default())
}

pub fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let rec = evaluate_files(
        &a.pred,
        &a.gt,
        &a.landmarks,
        a.mask_labels.as_deref(),
        a.pred_scale,
        a.gt_scale,
    )?;
    io::save_json(&a.out, &rec)
}

/// Rows per subject with neutral and posed metric columns, then a mean row
/// per column over the subjects that have it.
pub fn aggregate_csv(rows: &[(String, String, MetricsRecord)]) -> String {
    let splits = ["neutral", "posed"];
    let mut subjects: Vec<&str> = Vec::new();
    for (s, ..) in rows {
        if !subjects.contains(&s.as_str()) {
            subjects.push(s);
        }
    }
    let mut out = String::from("subject");
    for sp in splits {
        for m in ["l1_mm", "l2_mm", "nc", "recall_2_5"] {
            let _ = write!(out, ",{sp}_{m}");
        }
    }
    out.push('\n');
    let value = |r: &MetricsRecord, k: usize| [r.l1_mm, r.l2_mm, r.nc, r.recall_2_5][k];
    let mut sums = [[0.0f64; 4]; 2];
    let mut counts = [0usize; 2];
    for s in &subjects {
        out.push_str(s);
        for (si, sp) in splits.iter().enumerate() {
            match rows.iter().find(|(sub, split, _)| sub == s && split == sp) {
                Some((.., r)) => {
                    counts[si] += 1;
                    for k in 0..4 {
                        sums[si][k] += value(r, k);
                        let _ = write!(out, ",{}", value(r, k));
                    }
                }
                None => out.push_str(",,,,"),
            }
        }
        out.push('\n');
    }
    out.push_str("mean");
    for si in 0..2 {
        for k in 0..4 {
            if counts[si] > 0 {
                let _ = write!(out, ",{}", sums[si][k] / counts[si] as f64);
            } else {
                out.push(',');
            }
        }
    }
    out.push('\n');
    out
}

pub fn cmd_eval_batch(a: &EvalBatchArgs) -> Result<()> {
    let entries: Vec<BatchEntry> = io::load_json(&a.list)?;
    let base = a.list.parent().unwrap_or(Path::new("."));
    let mut rows = Vec::new();
    for e in &entries {
        if e.split != "neutral" && e.split != "posed" {
            return Err(Error::InvalidValue {
                field: "split".into(),
                detail: format!("{:?} is neither neutral nor posed", e.split),
            });
        }
        let rec = evaluate_files(
            &base.join(&e.pred),
            &base.join(&e.gt),
            &base.join(&e.landmarks),
            a.mask_labels.as_deref(),
            a.pred_scale,
            a.gt_scale,
        )?;
        rows.push((e.subject.clone(), e.split.clone(), rec));
    }
    std::fs::write(&a.out, aggregate_csv(&rows)).map_err(|e| Error::io(&a.out, e))
}

pub fn cmd_plot_overlay(a: &OverlayArgs) -> Result<()> {
    let mesh = io::load_mesh(&a.mesh)?;
    let reference = io::load_mesh(&a.reference)?;
    let cam = io::load_camera(&a.camera)?;
    let surface = MeshSurface::from_mesh(&reference)?;
    let map = crate::overlay::error_map(
        &mesh.vertices,
        &mesh.triangles,
        &surface,
        &cam,
        a.width as usize,
        a.height as usize,
        a.scale,
    );
    io::save_map(&a.out, &map)
}
