use std::fmt::Write as _;
use std::path::Path;

use super::pfm::with_path;
use super::{read_file, write_file};
use crate::error::{Error, Result};
use crate::{Vec2, Vec3};

/// Triangle mesh with optional per-vertex texture coordinates.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Mesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
    /// Either empty or one uv per vertex.
    pub uvs: Vec<Vec2>,
}

impl Mesh {
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> Self {
        Mesh {
            vertices,
            triangles,
            uvs: Vec::new(),
        }
    }

    pub fn scaled(&self, factor: f64) -> Mesh {
        Mesh {
            vertices: self.vertices.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }
}

/// Writes `v`, optional `vt`, and `f` records with 1-based indices.
/// Coordinates use the shortest decimal form that parses back exactly.
pub fn write_obj(mesh: &Mesh) -> String {
    let mut s = String::new();
    for v in &mesh.vertices {
        let _ = writeln!(s, "v {} {} {}", v.x, v.y, v.z);
    }
    for t in &mesh.uvs {
        let _ = writeln!(s, "vt {} {}", t.x, t.y);
    }
    let with_uv = !mesh.uvs.is_empty();
    for f in &mesh.triangles {
        let [a, b, c] = f.map(|i| i + 1);
        if with_uv {
            let _ = writeln!(s, "f {a}/{a} {b}/{b} {c}/{c}");
        } else {
            let _ = writeln!(s, "f {a} {b} {c}");
        }
    }
    s
}

/// Parses `v`, `vt` and `f` records; polygons are fan-triangulated. Texture
/// coordinates are kept only when every face corner uses the same index
/// for position and uv.
pub fn parse_obj(text: &str) -> Result<Mesh> {
    let mut mesh = Mesh::default();
    let mut uvs = Vec::new();
    let mut uv_consistent = true;
    for (lineno, line) in text.lines().enumerate() {
        let loc = || format!("line {}", lineno + 1);
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let c = parse_floats::<3>(&mut it, &loc())?;
                mesh.vertices.push(Vec3::from(c));
            }
            Some("vt") => {
                let c = parse_floats::<2>(&mut it, &loc())?;
                uvs.push(Vec2::from(c));
            }
            Some("f") => {
                let mut corners = Vec::new();
                for tok in it {
                    let mut parts = tok.split('/');
                    let vi = resolve(parts.next().unwrap_or(""), mesh.vertices.len(), &loc())?;
                    if let Some(t) = parts.next().filter(|t| !t.is_empty()) {
                        let ti = resolve(t, uvs.len(), &loc())?;
                        uv_consistent &= ti == vi;
                    } else {
                        uv_consistent = false;
                    }
                    corners.push(vi);
                }
                if corners.len() < 3 {
                    return Err(Error::Parse {
                        location: loc(),
                        detail: "face with fewer than 3 vertices".into(),
                    });
                }
                for k in 1..corners.len() - 1 {
                    mesh.triangles.push([corners[0], corners[k], corners[k + 1]]);
                }
            }
            _ => {}
        }
    }
    if uv_consistent && uvs.len() == mesh.vertices.len() && !mesh.triangles.is_empty() {
        mesh.uvs = uvs;
    }
    Ok(mesh)
}

fn parse_floats<const N: usize>(it: &mut std::str::SplitWhitespace, loc: &str) -> Result<[f64; N]> {
    let mut out = [0.0; N];
    for o in out.iter_mut() {
        let tok = it.next().ok_or_else(|| Error::Parse {
            location: loc.into(),
            detail: format!("expected {N} coordinates"),
        })?;
        *o = tok.parse().map_err(|_| Error::Parse {
            location: loc.into(),
            detail: format!("bad number {tok:?}"),
        })?;
    }
    Ok(out)
}

/// 1-based (or negative relative) OBJ index to a 0-based index.
fn resolve(tok: &str, count: usize, loc: &str) -> Result<u32> {
    let i: i64 = tok.parse().map_err(|_| Error::Parse {
        location: loc.into(),
        detail: format!("bad index {tok:?}"),
    })?;
    let resolved = match i {
        0 => {
            return Err(Error::Parse {
                location: loc.into(),
                detail: "OBJ indices are 1-based; got 0".into(),
            })
        }
        i if i > 0 => i - 1,
        i => count as i64 + i,
    };
    if resolved < 0 || resolved >= count as i64 {
        return Err(Error::Parse {
            location: loc.into(),
            detail: format!("index {i} out of range ({count} defined)"),
        });
    }
    Ok(resolved as u32)
}

pub fn load_mesh(path: impl AsRef<Path>) -> Result<Mesh> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    let text = String::from_utf8_lossy(&bytes);
    parse_obj(&text).map_err(|e| with_path(path, e))
}

pub fn save_mesh(path: impl AsRef<Path>, mesh: &Mesh) -> Result<()> {
    write_file(path.as_ref(), write_obj(mesh).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_triangle_round_trip() {
        let mut m = Mesh::new(
            vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.5, 0.0, -2.0), Vec3::new(0.0, 0.1, 0.3)],
            vec![[0, 1, 2]],
        );
        m.uvs = vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)];
        assert_eq!(parse_obj(&write_obj(&m)).unwrap(), m);
    }

    #[test]
    fn zero_index_is_rejected() {
        let err = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n").unwrap_err();
        assert!(matches!(err, Error::Parse { ref location, .. } if location == "line 4"));
    }

    #[test]
    fn quads_and_negative_indices() {
        let m = parse_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf -4 -3 -2 -1\n").unwrap();
        assert_eq!(m.triangles, vec![[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn icosphere_round_trip() {
        let (v, t) = crate::synth::icosphere(3);
        let m = Mesh::new(v, t);
        let back = parse_obj(&write_obj(&m)).unwrap();
        assert_eq!(back.triangles, m.triangles);
        for (a, b) in back.vertices.iter().zip(&m.vertices) {
            assert!((a - b).norm() < 1e-6);
        }
    }
}
