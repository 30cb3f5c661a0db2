use facefit::evalbench::{compute_metrics, compute_metrics_with_threshold, MeshSurface, PointCloud};
use facefit::model::vertex_normals;
use facefit::synth::{icosphere, sphere_head};
use facefit::tracker::smoothness_loss;
use facefit::{FaceParams, Vec3};
use proptest::prelude::*;

fn coeffs(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// With the jaw fixed, the shape is affine in the blendshape coefficients.
    #[test]
    fn forward_is_affine_in_coefficients(a in coeffs(12), b in coeffs(12), t in -1.0f64..2.0, jaw in 0.0f64..0.2) {
        let model = sphere_head();
        let face = |c: &[f64]| FaceParams { z_id: c[..8].to_vec(), z_ex: c[8..].to_vec(), jaw_theta: [jaw, 0.0, 0.0] };
        let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| (1.0 - t) * x + t * y).collect();
        let (va, vb, vm) = (model.forward(&face(&a)).unwrap(), model.forward(&face(&b)).unwrap(), model.forward(&face(&mix)).unwrap());
        for i in 0..va.len() {
            let expect = va[i] * (1.0 - t) + vb[i] * t;
            prop_assert!((vm[i] - expect).norm() < 1e-12);
        }
    }

    #[test]
    fn vertex_normals_have_unit_length(c in coeffs(12), jaw in 0.0f64..0.3) {
        let model = sphere_head();
        let face = FaceParams { z_id: c[..8].to_vec(), z_ex: c[8..].to_vec(), jaw_theta: [jaw, 0.0, 0.0] };
        let v = model.forward(&face).unwrap();
        for n in vertex_normals(&v, &model.triangles).unwrap() {
            prop_assert!((n.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn smoothness_is_non_negative(seq in prop::collection::vec(coeffs(3), 1..10), w in 0.0f64..100.0) {
        let b = seq.len();
        let (value, grads) = smoothness_loss(&seq, w, b);
        prop_assert!(value >= 0.0);
        prop_assert_eq!(grads.len(), b);
    }

    /// L2 dominates L1, recall grows with the threshold, NC stays in [-1, 1].
    #[test]
    fn metric_inequalities(offsets in prop::collection::vec(-8.0f64..8.0, 1..60), lo in 0.0f64..5.0, extra in 0.0f64..5.0) {
        let (v, t) = icosphere(2);
        let v: Vec<Vec3> = v.into_iter().map(|p| p * 100.0).collect();
        let mesh = MeshSurface::new(v.clone(), t).unwrap();
        let cloud = PointCloud {
            points: offsets.iter().enumerate().map(|(i, o)| v[i] * (1.0 + o / 100.0)).collect(),
            normals: offsets.iter().enumerate().map(|(i, _)| v[(i * 7) % v.len()].normalize()).collect(),
            labels: None,
        };
        let m = compute_metrics(&mesh, &cloud, None).unwrap();
        prop_assert!(m.l2_mm + 1e-12 >= m.l1_mm);
        prop_assert!(m.nc.abs() <= 1.0 + 1e-12);
        let r_lo = compute_metrics_with_threshold(&mesh, &cloud, None, lo).unwrap().recall_2_5;
        let r_hi = compute_metrics_with_threshold(&mesh, &cloud, None, lo + extra).unwrap().recall_2_5;
        prop_assert!(r_lo <= r_hi);
    }
}
