mod common;

use common::{make_case, smooth_sequence, visible_rmse};
use facefit::fitter::{fit_image, FitConfig};
use facefit::synth::{sphere_head, SceneSampler};
use facefit::tracker::{track_sequence, TrackConfig};

fn small_config() -> TrackConfig {
    TrackConfig {
        fit: FitConfig {
            steps: 80,
            ..FitConfig::default()
        },
        frame_steps: 40,
        rounds: 2,
        steps_per_round: 50,
        ..TrackConfig::default()
    }
}

#[test]
fn single_frame_equals_fit_image() {
    let model = sphere_head();
    let sampler = SceneSampler {
        width: 96,
        height: 96,
        ..SceneSampler::default()
    };
    let case = make_case(&model, &sampler, 12);
    let mut inputs = case.inputs.clone();
    inputs.landmarks2d = None;
    let cfg = small_config();
    let tracked = track_sequence(&model, std::slice::from_ref(&inputs), &cfg).unwrap();
    let fit = fit_image(&model, &inputs, &cfg.fit).unwrap();
    assert_eq!(tracked.frames.len(), 1);
    assert_eq!(tracked.frames[0].face, fit.face);
    assert_eq!(tracked.frames[0].cam, fit.cam);
    assert_eq!(tracked.frames[0].energy_trace, fit.energy_trace);
    assert!(tracked.flagged.is_empty());
}

#[test]
fn empty_sequence_is_rejected() {
    let model = sphere_head();
    assert!(track_sequence(&model, &[], &TrackConfig::default()).is_err());
}

fn second_difference(seq: &[Vec<f64>]) -> f64 {
    seq.windows(3)
        .map(|w| {
            w[0].iter()
                .zip(&w[1])
                .zip(&w[2])
                .map(|((a, b), c)| (a - 2.0 * b + c).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .sum()
}

/// Eight frames with smoothly varying expression: identity is shared, every
/// frame is recovered, and the recovered expression track is no rougher
/// than twice the ground truth's.
#[test]
fn smooth_sequence_is_tracked() {
    let model = sphere_head();
    let sampler = SceneSampler::default();
    let gt = smooth_sequence(&model, &sampler, 700, 8);
    let inputs: Vec<_> = gt.iter().map(|c| c.inputs.clone()).collect();
    let res = track_sequence(&model, &inputs, &TrackConfig::default()).unwrap();
    for f in &res.frames {
        assert_eq!(f.face.z_id, res.frames[0].face.z_id);
    }
    for (f, c) in res.frames.iter().zip(&gt) {
        let r = visible_rmse(&model, &f.face, c) / c.diag;
        assert!(r < 0.02, "frame {} rmse {r}", c.seed);
    }
    // checkpointed objective never increases
    assert!(res.objective_trace.windows(2).all(|w| w[1] <= w[0]));
    let fitted: Vec<Vec<f64>> = res.frames.iter().map(|f| f.face.z_ex.clone()).collect();
    let truth: Vec<Vec<f64>> = gt.iter().map(|c| c.scene.face.z_ex.clone()).collect();
    let (d_fit, d_gt) = (second_difference(&fitted), second_difference(&truth));
    assert!(d_fit <= 2.0 * d_gt, "second difference {d_fit} vs ground truth {d_gt}");
}
