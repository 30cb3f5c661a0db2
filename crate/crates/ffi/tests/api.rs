use std::ffi::{c_char, CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use facefit::raster::render_maps;
use facefit::synth::{sphere_head, SceneSampler};
use facefit_ffi::*;

fn cstr(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 512];
    unsafe {
        ff_last_error_message(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

#[test]
fn model_handle_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.p3dm");
    facefit::io::save_model(&path, &sphere_head()).unwrap();
    let mut m = ptr::null_mut();
    unsafe {
        assert_eq!(ff_model_load(cstr(&path).as_ptr(), &mut m), FfStatus::Ok);
        let (mut nv, mut nt, mut nid, mut nex) = (0, 0, 0, 0);
        assert_eq!(ff_model_dims(m, &mut nv, &mut nt, &mut nid, &mut nex), FfStatus::Ok);
        assert_eq!((nv, nt, nid, nex), (642, 1280, 8, 4));

        let z_id = [0.0; 8];
        let z_ex = [0.0; 4];
        let jaw = [0.0; 3];
        let mut out = vec![0.0; 3 * nv];
        let st = ff_model_forward(m, z_id.as_ptr(), 8, z_ex.as_ptr(), 4, jaw.as_ptr(), out.as_mut_ptr(), out.len());
        assert_eq!(st, FfStatus::Ok);
        let model = sphere_head();
        for (i, v) in model.template_vertices.iter().enumerate() {
            assert_eq!(&out[3 * i..3 * i + 3], v.as_slice());
        }
        // wrong coefficient count
        let st = ff_model_forward(m, z_id.as_ptr(), 7, z_ex.as_ptr(), 4, jaw.as_ptr(), out.as_mut_ptr(), out.len());
        assert_eq!(st, FfStatus::DimensionMismatch);
        assert!(!last_error().is_empty());
        ff_model_free(m);
    }
}

#[test]
fn null_and_error_reporting() {
    unsafe {
        assert_eq!(ff_model_sphere_head(ptr::null_mut()), FfStatus::NullPointer);
        assert!(last_error().contains("out"));
        let mut m = ptr::null_mut();
        let bad = CString::new("/definitely/missing.p3dm").unwrap();
        assert_eq!(ff_model_load(bad.as_ptr(), &mut m), FfStatus::Io);
        assert!(m.is_null());
        assert!(last_error().contains("missing.p3dm"));
        // success clears the message
        assert_eq!(ff_model_sphere_head(&mut m), FfStatus::Ok);
        assert_eq!(ff_last_error_message(ptr::null_mut(), 0), 0);
        ff_model_free(m);
        ff_model_free(ptr::null_mut());
        ff_fit_result_free(ptr::null_mut());
    }
}

#[test]
fn truncated_model_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.p3dm");
    std::fs::write(&path, b"P3DM1\n\x03\x00").unwrap();
    let mut m = ptr::null_mut();
    unsafe {
        assert_eq!(ff_model_load(cstr(&path).as_ptr(), &mut m), FfStatus::Format);
    }
}

#[test]
fn project_matches_library() {
    let cam = FfCamera {
        rotation: [0.0; 3],
        translation: [0.0; 3],
        focal_length: 500.0,
        principal_point: [256.0, 256.0],
    };
    let pts = [0.0, 0.0, 1.0, 0.1, 0.0, 1.0];
    let mut uv = [0.0; 4];
    let mut depth = [0.0; 2];
    unsafe {
        assert_eq!(ff_project(pts.as_ptr(), 2, &cam, uv.as_mut_ptr(), depth.as_mut_ptr()), FfStatus::Ok);
    }
    assert_eq!(uv, [256.0, 256.0, 306.0, 256.0]);
    assert_eq!(depth, [1.0, 1.0]);
    let bad = FfCamera {
        focal_length: -1.0,
        ..cam
    };
    unsafe {
        assert_eq!(
            ff_project(pts.as_ptr(), 2, &bad, uv.as_mut_ptr(), ptr::null_mut()),
            FfStatus::InvalidArgument
        );
    }
}

#[test]
fn fit_from_files() {
    let model = sphere_head();
    let sampler = SceneSampler {
        width: 96,
        height: 96,
        ..SceneSampler::default()
    };
    let scene = sampler.sample(&model, 3);
    let maps = render_maps(&model, &scene.face, &scene.cam, 96, 96).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (uv, n, mask, cfg) = (
        dir.path().join("uv.pfm"),
        dir.path().join("normal.pfm"),
        dir.path().join("mask.pgm"),
        dir.path().join("fit.toml"),
    );
    facefit::io::save_map(&uv, &maps.uv_map).unwrap();
    facefit::io::save_map(&n, &maps.normal_map).unwrap();
    facefit::io::save_mask(&mask, &maps.mask()).unwrap();
    std::fs::write(&cfg, "steps = 40\n").unwrap();
    unsafe {
        let mut m = ptr::null_mut();
        assert_eq!(ff_model_sphere_head(&mut m), FfStatus::Ok);
        let mut res = ptr::null_mut();
        let st = ff_fit_image_files(
            m,
            cstr(&uv).as_ptr(),
            cstr(&n).as_ptr(),
            cstr(&mask).as_ptr(),
            cstr(&cfg).as_ptr(),
            &mut res,
        );
        assert_eq!(st, FfStatus::Ok, "{}", last_error());
        let (mut e, mut steps) = (0.0, 0);
        assert_eq!(ff_fit_result_energy(res, &mut e, &mut steps), FfStatus::Ok);
        assert!(e.is_finite());
        assert_eq!(steps, 40);
        let mut cam = FfCamera {
            rotation: [0.0; 3],
            translation: [0.0; 3],
            focal_length: 0.0,
            principal_point: [0.0; 2],
        };
        assert_eq!(ff_fit_result_camera(res, &mut cam), FfStatus::Ok);
        assert!(cam.focal_length > 0.0);
        let (mut zi, mut ze, mut jaw) = ([0.0; 8], [0.0; 4], [0.0; 3]);
        assert_eq!(
            ff_fit_result_face(res, zi.as_mut_ptr(), 8, ze.as_mut_ptr(), 4, jaw.as_mut_ptr()),
            FfStatus::Ok
        );
        assert_eq!(
            ff_fit_result_face(res, zi.as_mut_ptr(), 3, ze.as_mut_ptr(), 4, jaw.as_mut_ptr()),
            FfStatus::DimensionMismatch
        );
        ff_fit_result_free(res);
        ff_model_free(m);
    }
}

#[test]
fn empty_mask_maps_to_status() {
    let dir = tempfile::tempdir().unwrap();
    let (uv, n, mask) = (dir.path().join("uv.pfm"), dir.path().join("n.pfm"), dir.path().join("m.pgm"));
    facefit::io::save_map(&uv, &facefit::MapImage::new(8, 8, 2)).unwrap();
    facefit::io::save_map(&n, &facefit::MapImage::new(8, 8, 3)).unwrap();
    facefit::io::save_mask(&mask, &facefit::MapImage::from_mask(8, 8, vec![false; 64])).unwrap();
    unsafe {
        let mut m = ptr::null_mut();
        ff_model_sphere_head(&mut m);
        let mut res = ptr::null_mut();
        let st = ff_fit_image_files(
            m,
            cstr(&uv).as_ptr(),
            cstr(&n).as_ptr(),
            cstr(&mask).as_ptr(),
            ptr::null(),
            &mut res,
        );
        assert_ne!(st, FfStatus::Ok);
        assert!(res.is_null());
        ff_model_free(m);
    }
}

fn target_dir() -> PathBuf {
    // target/<profile>/deps/<test binary>
    std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn header_compiles_and_links_from_c() {
    let crate_dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let lib = target_dir().join("libfacefit_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());
    let out = tempfile::tempdir().unwrap();
    let exe = out.path().join("smoke");
    let status = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(crate_dir.join("include"))
        .arg(crate_dir.join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .arg("-o")
        .arg(&exe)
        .status()
        .expect("C compiler available");
    assert!(status.success());
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "exit {:?}", run.status.code());
    assert!(String::from_utf8_lossy(&run.stdout).starts_with("ok "));
}
