use std::fmt::Write as _;
use std::path::Path;

use super::pfm::with_path;
use super::{read_file, write_file};
use crate::error::{Error, Result};
use crate::evalbench::PointCloud;
use crate::Vec3;

/// Ascii PLY with `x y z nx ny nz` and an optional integer `label`.
pub fn write_ply(cloud: &PointCloud) -> String {
    let mut s = String::from("ply\nformat ascii 1.0\n");
    let _ = writeln!(s, "element vertex {}", cloud.points.len());
    for p in ["x", "y", "z", "nx", "ny", "nz"] {
        let _ = writeln!(s, "property float {p}");
    }
    if cloud.labels.is_some() {
        s.push_str("property int label\n");
    }
    s.push_str("end_header\n");
    for (i, (p, n)) in cloud.points.iter().zip(&cloud.normals).enumerate() {
        let _ = write!(s, "{} {} {} {} {} {}", p.x, p.y, p.z, n.x, n.y, n.z);
        if let Some(l) = &cloud.labels {
            let _ = write!(s, " {}", l[i]);
        }
        s.push('\n');
    }
    s
}

fn header_err(detail: impl Into<String>) -> Error {
    Error::MalformedHeader {
        field: "ply header".into(),
        detail: detail.into(),
    }
}

pub fn parse_ply(text: &str) -> Result<PointCloud> {
    let mut lines = text.lines().enumerate();
    if lines.next().map(|(_, l)| l.trim()) != Some("ply") {
        return Err(header_err("missing 'ply' magic"));
    }
    // elements in declaration order: (name, count, property names)
    let mut elements: Vec<(String, usize, Vec<String>)> = Vec::new();
    let mut ascii = false;
    let mut body_start = None;
    for (no, line) in lines.by_ref() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["format", "ascii", _] => ascii = true,
            ["format", ..] => return Err(header_err("only ascii PLY is supported")),
            ["element", name, count] => {
                let count = count.parse().map_err(|_| header_err(format!("bad element count on line {}", no + 1)))?;
                elements.push((name.to_string(), count, Vec::new()));
            }
            ["property", "list", ..] => {
                let e = elements.last_mut().ok_or_else(|| header_err("property before element"))?;
                e.2.push(toks.last().unwrap().to_string());
            }
            ["property", _, name] => {
                let e = elements.last_mut().ok_or_else(|| header_err("property before element"))?;
                e.2.push(name.to_string());
            }
            ["end_header"] => {
                body_start = Some(no + 1);
                break;
            }
            _ => {}
        }
    }
    if !ascii {
        return Err(header_err("missing ascii format line"));
    }
    let body_start = body_start.ok_or_else(|| header_err("missing end_header"))?;
    let vi = elements
        .iter()
        .position(|e| e.0 == "vertex")
        .ok_or_else(|| header_err("no vertex element"))?;
    let props = &elements[vi].2;
    let col = |name: &str| props.iter().position(|p| p == name);
    let mut cols = [0usize; 6];
    for (c, name) in cols.iter_mut().zip(["x", "y", "z", "nx", "ny", "nz"]) {
        *c = col(name).ok_or_else(|| header_err(format!("vertex element lacks property {name}")))?;
    }
    let label_col = col("label");
    let skip: usize = elements[..vi].iter().map(|e| e.1).sum();
    let count = elements[vi].1;
    let mut cloud = PointCloud {
        points: Vec::with_capacity(count),
        normals: Vec::with_capacity(count),
        labels: label_col.map(|_| Vec::with_capacity(count)),
    };
    let mut body = lines.skip(skip);
    for k in 0..count {
        let (no, line) = body.next().ok_or_else(|| Error::Parse {
            location: format!("line {}", body_start + skip + k + 1),
            detail: format!("expected {count} vertices, found {k}"),
        })?;
        let loc = || format!("line {}", no + 1);
        let vals: Vec<&str> = line.split_whitespace().collect();
        if vals.len() < props.len() {
            return Err(Error::Parse {
                location: loc(),
                detail: format!("expected {} values", props.len()),
            });
        }
        let num = |i: usize| -> Result<f64> {
            vals[i].parse().map_err(|_| Error::Parse {
                location: loc(),
                detail: format!("bad number {:?}", vals[i]),
            })
        };
        cloud.points.push(Vec3::new(num(cols[0])?, num(cols[1])?, num(cols[2])?));
        cloud.normals.push(Vec3::new(num(cols[3])?, num(cols[4])?, num(cols[5])?));
        if let (Some(c), Some(labels)) = (label_col, cloud.labels.as_mut()) {
            labels.push(num(c)? as i32);
        }
    }
    Ok(cloud)
}

pub fn load_pointcloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    parse_ply(&String::from_utf8_lossy(&bytes)).map_err(|e| with_path(path, e))
}

pub fn save_pointcloud(path: impl AsRef<Path>, cloud: &PointCloud) -> Result<()> {
    write_file(path.as_ref(), write_ply(cloud).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    const ONE: &str = "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\nproperty float nx\nproperty float ny\nproperty float nz\nend_header\n1.5 -2 3.25 0 0 1\n";

    #[test]
    fn one_point_parses_exactly() {
        let c = parse_ply(ONE).unwrap();
        assert_eq!(c.points, vec![Vec3::new(1.5, -2.0, 3.25)]);
        assert_eq!(c.normals, vec![Vec3::new(0.0, 0.0, 1.0)]);
        assert!(c.labels.is_none());
    }

    #[test]
    fn missing_normal_is_malformed_header() {
        let text = ONE.replace("property float nz\n", "");
        assert!(matches!(parse_ply(&text), Err(Error::MalformedHeader { .. })));
    }

    #[test]
    fn labels_and_extra_elements() {
        let text = "ply\nformat ascii 1.0\nelement vertex 2\nproperty float nx\nproperty float ny\nproperty float nz\nproperty float x\nproperty float y\nproperty float z\nproperty int label\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n0 1 0 1 2 3 7\n1 0 0 4 5 6 2\n3 0 1 1\n";
        let c = parse_ply(text).unwrap();
        assert_eq!(c.points[1], Vec3::new(4.0, 5.0, 6.0));
        assert_eq!(c.normals[0], Vec3::new(0.0, 1.0, 0.0));
        assert_eq!(c.labels, Some(vec![7, 2]));
    }
}
