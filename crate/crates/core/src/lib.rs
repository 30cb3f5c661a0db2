//! Morphable face model fitting from dense per-pixel geometric cues.
//!
//! The crate reconstructs identity, expression and jaw parameters of a
//! linear blendshape head model, together with a pinhole camera, from a
//! predicted uv-coordinate map and a predicted surface-normal map. It also
//! contains the pieces needed to verify that pipeline end to end:
//!
//! - [`model`]: blendshape + jaw skinning head model and its Jacobian.
//! - [`camera`]: pinhole projection with axis-angle extrinsics.
//! - [`raster`]: deterministic software rasterizer and map renderer.
//! - [`correspond`]: exact nearest-neighbour uv lookup for 2D targets.
//! - [`fitter`]: single-image energy, gradients and Adam optimization.
//! - [`tracker`]: monocular sequence tracking with temporal smoothness.
//! - [`evalbench`]: rigid alignment and Chamfer/normal/recall metrics.
//! - [`io`]: PFM/PGM/OBJ/PLY/P3DM/JSON codecs.
//! - [`cli`]: the `facefit` command line.

pub mod camera;
pub mod cli;
pub mod correspond;
pub mod error;
pub mod evalbench;
pub mod fitter;
pub mod io;
pub mod map;
pub mod model;
pub mod overlay;
pub mod raster;
pub mod rotation;
pub mod synth;
pub mod tracker;

pub use camera::CameraParams;
pub use error::{Error, Result};
pub use map::MapImage;
pub use model::{FaceParams, MorphableModel};

/// 3-vector used for all geometry.
pub type Vec3 = nalgebra::Vector3<f64>;
/// 2-vector used for pixel coordinates and uv values.
pub type Vec2 = nalgebra::Vector2<f64>;
/// 3x3 matrix.
pub type Mat3 = nalgebra::Matrix3<f64>;
