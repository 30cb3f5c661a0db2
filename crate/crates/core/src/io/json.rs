use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{read_file, write_file};
use crate::camera::CameraParams;
use crate::error::{Error, Result};
use crate::model::FaceParams;

pub fn load_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })
}

pub fn save_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable value");
    text.push('\n');
    write_file(path.as_ref(), text.as_bytes())
}

/// Camera sidecar: `rotation[3]`, `translation[3]`, `focal_length`,
/// `principal_point[2]`.
pub fn load_camera(path: impl AsRef<Path>) -> Result<CameraParams> {
    let cam: CameraParams = load_json(&path)?;
    cam.validate().map_err(|e| Error::Format {
        path: path.as_ref().to_path_buf(),
        detail: e.to_string(),
    })?;
    Ok(cam)
}

pub fn save_camera(path: impl AsRef<Path>, cam: &CameraParams) -> Result<()> {
    save_json(path, cam)
}

/// Face parameters: `z_id`, `z_ex`, `jaw_theta[3]`.
pub fn load_face_params(path: impl AsRef<Path>) -> Result<FaceParams> {
    load_json(path)
}

pub fn save_face_params(path: impl AsRef<Path>, face: &FaceParams) -> Result<()> {
    save_json(path, face)
}
