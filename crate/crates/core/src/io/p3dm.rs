//! P3DM1 model asset codec. Layout (little-endian):
//!
//! ```text
//! "P3DM1\n"
//! u32 N, u32 F, u32 K_id, u32 K_ex
//! f32 template[N][3]
//! u32 triangles[F][3]
//! f32 id_basis[N][3][K_id]
//! f32 ex_basis[N][3][K_ex]
//! f32 jaw_joint[3]
//! f32 jaw_weights[N]
//! f32 vertex_uv[N][2]
//! u32 L, u32 landmarks[L]
//! ```

use std::path::Path;

use super::pfm::with_path;
use super::{read_file, write_file, Reader};
use crate::error::{Error, Result};
use crate::model::MorphableModel;
use crate::{Vec2, Vec3};

pub const MAGIC: &[u8; 6] = b"P3DM1\n";

/// Encodes a model. Values are narrowed to f32.
pub fn encode_model(m: &MorphableModel) -> Vec<u8> {
    let mut out = MAGIC.to_vec();
    let u32s = |out: &mut Vec<u8>, v: &[u32]| v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
    u32s(&mut out, &[m.num_vertices() as u32, m.num_triangles() as u32, m.n_id as u32, m.n_ex as u32]);
    let f32s = |out: &mut Vec<u8>, v: &mut dyn Iterator<Item = f64>| v.for_each(|x| out.extend_from_slice(&(x as f32).to_le_bytes()));
    f32s(&mut out, &mut m.template_vertices.iter().flat_map(|v| v.iter().copied()));
    let tris: Vec<u32> = m.triangles.iter().flatten().copied().collect();
    u32s(&mut out, &tris);
    f32s(&mut out, &mut m.id_basis.iter().copied());
    f32s(&mut out, &mut m.ex_basis.iter().copied());
    f32s(&mut out, &mut m.jaw_joint.iter().copied());
    f32s(&mut out, &mut m.jaw_weights.iter().copied());
    f32s(&mut out, &mut m.vertex_uv.iter().flat_map(|v| v.iter().copied()));
    u32s(&mut out, &[m.landmark_vertex_ids.len() as u32]);
    u32s(&mut out, &m.landmark_vertex_ids);
    out
}

/// Decodes and fully validates a model.
pub fn decode_model(bytes: &[u8]) -> Result<MorphableModel> {
    let mut r = Reader::new(bytes);
    let magic = r.take(MAGIC.len(), "magic").map_err(|_| Error::MalformedHeader {
        field: "magic".into(),
        detail: "file shorter than the P3DM1 magic".into(),
    })?;
    if magic != MAGIC {
        return Err(Error::MalformedHeader {
            field: "magic".into(),
            detail: "expected \"P3DM1\\n\"".into(),
        });
    }
    let n = r.u32("N")? as usize;
    let f = r.u32("F")? as usize;
    let k_id = r.u32("K_id")? as usize;
    let k_ex = r.u32("K_ex")? as usize;
    let vec3s = |v: Vec<f32>| -> Vec<Vec3> { v.chunks_exact(3).map(|c| Vec3::new(c[0] as f64, c[1] as f64, c[2] as f64)).collect() };
    let widen = |v: Vec<f32>| -> Vec<f64> { v.into_iter().map(f64::from).collect() };
    let template = vec3s(r.f32s(n * 3, "template")?);
    let tris: Vec<[u32; 3]> = r.u32s(f * 3, "triangles")?.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    let id_basis = widen(r.f32s(n * 3 * k_id, "id_basis")?);
    let ex_basis = widen(r.f32s(n * 3 * k_ex, "ex_basis")?);
    let jaw = r.f32s(3, "jaw_joint")?;
    let jaw_weights = widen(r.f32s(n, "jaw_weights")?);
    let uv: Vec<Vec2> = r.f32s(n * 2, "vertex_uv")?.chunks_exact(2).map(|c| Vec2::new(c[0] as f64, c[1] as f64)).collect();
    let l = r.u32("landmark count")? as usize;
    let landmarks = r.u32s(l, "landmarks")?;
    if r.pos != bytes.len() {
        return Err(Error::dim("file length", r.pos, bytes.len()));
    }
    let model = MorphableModel {
        template_vertices: template,
        triangles: tris,
        n_id: k_id,
        n_ex: k_ex,
        id_basis,
        ex_basis,
        jaw_joint: Vec3::new(jaw[0] as f64, jaw[1] as f64, jaw[2] as f64),
        jaw_weights,
        vertex_uv: uv,
        landmark_vertex_ids: landmarks,
    };
    model.validate()?;
    Ok(model)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<MorphableModel> {
    let path = path.as_ref();
    decode_model(&read_file(path)?).map_err(|e| match e {
        // keep the structured kinds callers match on
        Error::MalformedHeader { .. } | Error::DimensionMismatch { .. } | Error::NonFiniteData { .. } => e,
        other => with_path(path, other),
    })
}

pub fn save_model(path: impl AsRef<Path>, model: &MorphableModel) -> Result<()> {
    write_file(path.as_ref(), &encode_model(model))
}
