//! Parametric head model: identity/expression blendshapes plus a single
//! linear-blend-skinned jaw joint.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rotation;
use crate::{Mat3, Vec2, Vec3};

/// Blendshape head model. Positions are in meters.
///
/// Basis arrays are stored vertex-major as `[vertex][coord][component]`,
/// i.e. element `(i, c, k)` lives at `(i * 3 + c) * K + k`.
#[derive(Debug, Clone, PartialEq)]
pub struct MorphableModel {
    pub template_vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
    pub n_id: usize,
    pub n_ex: usize,
    pub id_basis: Vec<f64>,
    pub ex_basis: Vec<f64>,
    pub jaw_joint: Vec3,
    pub jaw_weights: Vec<f64>,
    pub vertex_uv: Vec<Vec2>,
    pub landmark_vertex_ids: Vec<u32>,
}

/// Model coefficients: identity, expression and jaw axis-angle (radians).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceParams {
    pub z_id: Vec<f64>,
    pub z_ex: Vec<f64>,
    pub jaw_theta: [f64; 3],
}

impl FaceParams {
    pub fn zeros(model: &MorphableModel) -> Self {
        FaceParams {
            z_id: vec![0.0; model.n_id],
            z_ex: vec![0.0; model.n_ex],
            jaw_theta: [0.0; 3],
        }
    }

    pub fn jaw(&self) -> Vec3 {
        Vec3::from(self.jaw_theta)
    }

    pub fn validate(&self, model: &MorphableModel) -> Result<()> {
        if self.z_id.len() != model.n_id {
            return Err(Error::dim("z_id", model.n_id, self.z_id.len()));
        }
        if self.z_ex.len() != model.n_ex {
            return Err(Error::dim("z_ex", model.n_ex, self.z_ex.len()));
        }
        let all = self.z_id.iter().chain(&self.z_ex).chain(&self.jaw_theta);
        if let Some(index) = all.clone().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteData {
                field: "face params".into(),
                index,
            });
        }
        if self.jaw().norm() >= std::f64::consts::PI {
            return Err(Error::InvalidValue {
                field: "jaw_theta".into(),
                detail: "rotation angle must be below pi".into(),
            });
        }
        Ok(())
    }
}

impl MorphableModel {
    pub fn num_vertices(&self) -> usize {
        self.template_vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// Displacement of basis component `k` at vertex `i`.
    #[inline]
    pub fn id_component(&self, i: usize, k: usize) -> Vec3 {
        basis_at(&self.id_basis, self.n_id, i, k)
    }

    #[inline]
    pub fn ex_component(&self, i: usize, k: usize) -> Vec3 {
        basis_at(&self.ex_basis, self.n_ex, i, k)
    }

    /// Checks every structural invariant of the model.
    pub fn validate(&self) -> Result<()> {
        let n = self.num_vertices();
        if n == 0 {
            return Err(Error::dim("template_vertices", "at least 1 vertex", 0));
        }
        if self.id_basis.len() != n * 3 * self.n_id {
            return Err(Error::dim("id_basis", n * 3 * self.n_id, self.id_basis.len()));
        }
        if self.ex_basis.len() != n * 3 * self.n_ex {
            return Err(Error::dim("ex_basis", n * 3 * self.n_ex, self.ex_basis.len()));
        }
        if self.jaw_weights.len() != n {
            return Err(Error::dim("jaw_weights", n, self.jaw_weights.len()));
        }
        if self.vertex_uv.len() != n {
            return Err(Error::dim("vertex_uv", n, self.vertex_uv.len()));
        }
        for (t, tri) in self.triangles.iter().enumerate() {
            if let Some(&bad) = tri.iter().find(|&&v| v as usize >= n) {
                return Err(Error::dim(
                    format!("triangles[{t}]"),
                    format!("index < {n}"),
                    bad,
                ));
            }
        }
        for &id in &self.landmark_vertex_ids {
            if id as usize >= n {
                return Err(Error::dim("landmark_vertex_ids", format!("index < {n}"), id));
            }
        }
        check_finite("template_vertices", self.template_vertices.iter().flat_map(|v| v.iter().copied()))?;
        check_finite("id_basis", self.id_basis.iter().copied())?;
        check_finite("ex_basis", self.ex_basis.iter().copied())?;
        check_finite("jaw_joint", self.jaw_joint.iter().copied())?;
        check_finite("jaw_weights", self.jaw_weights.iter().copied())?;
        check_finite("vertex_uv", self.vertex_uv.iter().flat_map(|v| v.iter().copied()))?;
        if let Some(i) = self.jaw_weights.iter().position(|w| !(0.0..=1.0).contains(w)) {
            return Err(Error::InvalidValue {
                field: format!("jaw_weights[{i}]"),
                detail: "must lie in [0, 1]".into(),
            });
        }
        if let Some(i) = self
            .vertex_uv
            .iter()
            .position(|uv| !(0.0..=1.0).contains(&uv.x) || !(0.0..=1.0).contains(&uv.y))
        {
            return Err(Error::InvalidValue {
                field: format!("vertex_uv[{i}]"),
                detail: "must lie in [0, 1]^2".into(),
            });
        }
        for (t, tri) in self.triangles.iter().enumerate() {
            let [a, b, c] = tri.map(|v| self.template_vertices[v as usize]);
            if (b - a).cross(&(c - a)).norm() == 0.0 {
                return Err(Error::DegenerateGeometry(format!("triangle {t} has zero area in the template")));
            }
        }
        Ok(())
    }

    /// Rest-pose vertices: template plus identity and expression offsets.
    pub fn shaped(&self, params: &FaceParams) -> Result<Vec<Vec3>> {
        params.validate(self)?;
        Ok((0..self.num_vertices())
            .map(|i| {
                let mut p = self.template_vertices[i];
                for (k, &z) in params.z_id.iter().enumerate() {
                    if z != 0.0 {
                        p += z * self.id_component(i, k);
                    }
                }
                for (k, &z) in params.z_ex.iter().enumerate() {
                    if z != 0.0 {
                        p += z * self.ex_component(i, k);
                    }
                }
                p
            })
            .collect())
    }

    /// Posed vertex positions.
    ///
    /// `V_i = S_i + w_i (R(theta) - I)(S_i - J)` where `S_i` is the shaped
    /// rest vertex, `J` the jaw joint and `w_i` the skinning weight.
    pub fn forward(&self, params: &FaceParams) -> Result<Vec<Vec3>> {
        let shaped = self.shaped(params)?;
        let jaw = params.jaw();
        if jaw == Vec3::zeros() {
            return Ok(shaped);
        }
        let delta = rotation::exp(&jaw) - Mat3::identity();
        Ok(shaped
            .into_iter()
            .zip(&self.jaw_weights)
            .map(|(s, &w)| if w == 0.0 { s } else { s + w * (delta * (s - self.jaw_joint)) })
            .collect())
    }

    /// Analytic Jacobian of [`forward`](Self::forward).
    pub fn forward_jacobian(&self, params: &FaceParams) -> Result<ModelJacobian<'_>> {
        let shaped = self.shaped(params)?;
        let jaw = params.jaw();
        let r = rotation::exp(&jaw);
        let dr = rotation::exp_derivatives(&jaw);
        let blend = shaped
            .iter()
            .zip(&self.jaw_weights)
            .map(|(_, &w)| Mat3::identity() + w * (r - Mat3::identity()))
            .collect();
        let jaw_cols = shaped
            .iter()
            .zip(&self.jaw_weights)
            .map(|(s, &w)| {
                if w == 0.0 {
                    None
                } else {
                    let d = s - self.jaw_joint;
                    Some([w * (dr[0] * d), w * (dr[1] * d), w * (dr[2] * d)])
                }
            })
            .collect();
        Ok(ModelJacobian {
            model: self,
            blend,
            jaw_cols,
        })
    }
}

#[inline]
fn basis_at(basis: &[f64], k_count: usize, i: usize, k: usize) -> Vec3 {
    let base = i * 3 * k_count + k;
    Vec3::new(basis[base], basis[base + k_count], basis[base + 2 * k_count])
}

fn check_finite(field: &str, values: impl Iterator<Item = f64>) -> Result<()> {
    for (index, v) in values.enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFiniteData {
                field: field.into(),
                index,
            });
        }
    }
    Ok(())
}

/// Sparse Jacobian of posed vertices w.r.t. `(z_id, z_ex, jaw_theta)`.
///
/// Blendshape columns factor as `blend_i * basis_i,k`, with `blend_i` the
/// per-vertex skinning transform; jaw columns exist only for skinned
/// vertices.
pub struct ModelJacobian<'a> {
    model: &'a MorphableModel,
    blend: Vec<Mat3>,
    jaw_cols: Vec<Option<[Vec3; 3]>>,
}

/// Gradient with respect to the face parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceGradient {
    pub z_id: Vec<f64>,
    pub z_ex: Vec<f64>,
    pub jaw_theta: Vec3,
}

impl FaceGradient {
    pub fn zeros(model: &MorphableModel) -> Self {
        FaceGradient {
            z_id: vec![0.0; model.n_id],
            z_ex: vec![0.0; model.n_ex],
            jaw_theta: Vec3::zeros(),
        }
    }
}

impl ModelJacobian<'_> {
    pub fn num_params(&self) -> usize {
        self.model.n_id + self.model.n_ex + 3
    }

    /// `dV_i / dz_id[k]`.
    pub fn d_id(&self, i: usize, k: usize) -> Vec3 {
        self.blend[i] * self.model.id_component(i, k)
    }

    pub fn d_ex(&self, i: usize, k: usize) -> Vec3 {
        self.blend[i] * self.model.ex_component(i, k)
    }

    /// `dV_i / d jaw_theta[j]`; zero for unskinned vertices.
    pub fn d_jaw(&self, i: usize, j: usize) -> Vec3 {
        self.jaw_cols[i].map_or_else(Vec3::zeros, |c| c[j])
    }

    /// Column `p` of the dense Jacobian, parameters ordered
    /// `z_id, z_ex, jaw_theta`.
    pub fn column(&self, p: usize) -> Vec<Vec3> {
        let (n_id, n_ex) = (self.model.n_id, self.model.n_ex);
        (0..self.blend.len())
            .map(|i| {
                if p < n_id {
                    self.d_id(i, p)
                } else if p < n_id + n_ex {
                    self.d_ex(i, p - n_id)
                } else {
                    self.d_jaw(i, p - n_id - n_ex)
                }
            })
            .collect()
    }

    /// Vector-Jacobian product: pulls a per-vertex gradient back onto the
    /// face parameters. Accumulates in ascending vertex order.
    pub fn pullback(&self, grad_vertices: &[Vec3]) -> FaceGradient {
        let m = self.model;
        let mut out = FaceGradient::zeros(m);
        for (i, g) in grad_vertices.iter().enumerate() {
            if *g == Vec3::zeros() {
                continue;
            }
            let pre = self.blend[i].transpose() * g;
            let base_id = i * 3 * m.n_id;
            for (k, acc) in out.z_id.iter_mut().enumerate() {
                let b = base_id + k;
                *acc += pre.x * m.id_basis[b] + pre.y * m.id_basis[b + m.n_id] + pre.z * m.id_basis[b + 2 * m.n_id];
            }
            let base_ex = i * 3 * m.n_ex;
            for (k, acc) in out.z_ex.iter_mut().enumerate() {
                let b = base_ex + k;
                *acc += pre.x * m.ex_basis[b] + pre.y * m.ex_basis[b + m.n_ex] + pre.z * m.ex_basis[b + 2 * m.n_ex];
            }
            if let Some(cols) = &self.jaw_cols[i] {
                for j in 0..3 {
                    out.jaw_theta[j] += cols[j].dot(g);
                }
            }
        }
        out
    }
}

/// Area-weighted vertex normals, accumulated in ascending triangle order.
pub fn vertex_normals(vertices: &[Vec3], triangles: &[[u32; 3]]) -> Result<Vec<Vec3>> {
    let sums = normal_sums(vertices, triangles);
    sums.iter()
        .enumerate()
        .map(|(i, s)| {
            let len = s.norm();
            if len > 0.0 && len.is_finite() {
                Ok(s / len)
            } else {
                Err(Error::DegenerateGeometry(format!(
                    "vertex {i} has no adjacent face with nonzero area"
                )))
            }
        })
        .collect()
}

/// Unnormalized per-vertex sums of face cross products (twice the area
/// weighted face normals).
pub fn normal_sums(vertices: &[Vec3], triangles: &[[u32; 3]]) -> Vec<Vec3> {
    let mut sums = vec![Vec3::zeros(); vertices.len()];
    for tri in triangles {
        let [a, b, c] = tri.map(|v| vertices[v as usize]);
        let n = (b - a).cross(&(c - a));
        for &v in tri {
            sums[v as usize] += n;
        }
    }
    sums
}

/// Backpropagates a gradient on unit vertex normals to vertex positions.
///
/// `sums` are the values from [`normal_sums`] at the same vertices.
pub fn vertex_normals_pullback(
    vertices: &[Vec3],
    triangles: &[[u32; 3]],
    sums: &[Vec3],
    grad_normals: &[Vec3],
) -> Vec<Vec3> {
    // gradient w.r.t. each unnormalized sum
    let grad_sums: Vec<Vec3> = sums
        .iter()
        .zip(grad_normals)
        .map(|(s, g)| {
            let len = s.norm();
            if len == 0.0 || *g == Vec3::zeros() {
                return Vec3::zeros();
            }
            let n = s / len;
            (g - n * n.dot(g)) / len
        })
        .collect();
    let mut out = vec![Vec3::zeros(); vertices.len()];
    for tri in triangles {
        let [ia, ib, ic] = tri.map(|v| v as usize);
        let g = grad_sums[ia] + grad_sums[ib] + grad_sums[ic];
        if g == Vec3::zeros() {
            continue;
        }
        let (a, b, c) = (vertices[ia], vertices[ib], vertices[ic]);
        out[ia] += g.cross(&(c - b));
        out[ib] += g.cross(&(a - c));
        out[ic] += g.cross(&(b - a));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    fn tiny_model() -> MorphableModel {
        MorphableModel {
            template_vertices: vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)],
            triangles: vec![[0, 1, 2]],
            n_id: 1,
            n_ex: 1,
            id_basis: vec![0.1, 0.0, 0.0, 0.0, 0.2, 0.0, 0.0, 0.0, 0.3],
            ex_basis: vec![0.0, 0.0, 0.01, 0.0, 0.0, 0.02, 0.0, 0.0, 0.03],
            jaw_joint: Vec3::new(0.0, 0.0, -1.0),
            jaw_weights: vec![0.0, 0.5, 1.0],
            vertex_uv: vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)],
            landmark_vertex_ids: vec![0],
        }
    }

    #[test]
    fn zero_params_reproduce_template() {
        let m = tiny_model();
        assert_eq!(m.forward(&FaceParams::zeros(&m)).unwrap(), m.template_vertices);
        let s = synth::sphere_head();
        assert_eq!(s.forward(&FaceParams::zeros(&s)).unwrap(), s.template_vertices);
    }

    #[test]
    fn single_identity_coefficient_is_linear() {
        let m = synth::sphere_head();
        let mut p = FaceParams::zeros(&m);
        p.z_id[0] = 0.7;
        let v = m.forward(&p).unwrap();
        for i in 0..m.num_vertices() {
            let expect = m.template_vertices[i] + 0.7 * m.id_component(i, 0);
            assert_eq!(v[i], expect);
        }
    }

    #[test]
    fn fully_skinned_vertex_follows_rodrigues_oracle() {
        let m = tiny_model();
        let mut p = FaceParams::zeros(&m);
        p.jaw_theta = [0.3, 0.0, 0.0];
        let v = m.forward(&p).unwrap();
        let (s, c) = 0.3f64.sin_cos();
        let rx = Mat3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c);
        let p2 = m.template_vertices[2];
        let expect = rx * (p2 - m.jaw_joint) + m.jaw_joint;
        assert!((v[2] - expect).norm() < 1e-15);
        assert_eq!(v[0], m.template_vertices[0]);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let m = tiny_model();
        let p = FaceParams {
            z_id: vec![0.0; 2],
            z_ex: vec![0.0],
            jaw_theta: [0.0; 3],
        };
        assert!(matches!(m.forward(&p), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn identity_columns_equal_basis_at_zero_jaw() {
        let m = synth::sphere_head();
        let mut p = FaceParams::zeros(&m);
        p.z_ex[1] = 0.4;
        let j = m.forward_jacobian(&p).unwrap();
        for k in 0..m.n_id {
            let col = j.column(k);
            for i in 0..m.num_vertices() {
                assert_eq!(col[i], m.id_component(i, k));
            }
        }
    }

    #[test]
    fn unskinned_vertex_has_no_jaw_derivative() {
        let m = tiny_model();
        let mut p = FaceParams::zeros(&m);
        p.jaw_theta = [0.2, -0.1, 0.05];
        let j = m.forward_jacobian(&p).unwrap();
        for a in 0..3 {
            assert_eq!(j.d_jaw(0, a), Vec3::zeros());
            assert_ne!(j.d_jaw(2, a), Vec3::zeros());
        }
    }

    #[test]
    fn planar_quad_normals_point_up() {
        let v = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(1.0, 1.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
        ];
        let n = vertex_normals(&v, &[[0, 1, 2], [0, 2, 3]]).unwrap();
        for x in n {
            assert_eq!(x, Vec3::new(0.0, 0.0, 1.0));
        }
    }

    #[test]
    fn sphere_normals_match_radial_direction() {
        let (v, t) = synth::icosphere(3);
        let n = vertex_normals(&v, &t).unwrap();
        for (p, q) in v.iter().zip(&n) {
            assert!(p.normalize().dot(q) > 1.0 - 1e-2);
            assert!((q.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn flipping_winding_flips_face_contribution() {
        let (v, mut t) = synth::icosphere(1);
        let before = normal_sums(&v, &t);
        let flipped = 7;
        t[flipped].swap(1, 2);
        let after = normal_sums(&v, &t);
        // brute-force per-face recomputation
        let [a, b, c] = t[flipped].map(|i| v[i as usize]);
        let face = (b - a).cross(&(c - a));
        for &vi in &t[flipped] {
            let vi = vi as usize;
            let diff = after[vi] - before[vi];
            assert!((diff - 2.0 * face).norm() < 1e-12);
        }
    }

    #[test]
    fn isolated_vertex_is_degenerate() {
        let v = vec![Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::z()];
        let err = vertex_normals(&v, &[[0, 1, 2]]).unwrap_err();
        assert!(matches!(err, Error::DegenerateGeometry(_)));
    }

    #[test]
    fn normal_pullback_matches_finite_differences() {
        let (v, t) = synth::icosphere(1);
        let v: Vec<Vec3> = v
            .iter()
            .enumerate()
            .map(|(i, p)| p * (1.0 + 0.05 * (i as f64 * 0.7).sin()))
            .collect();
        let weights: Vec<Vec3> = (0..v.len())
            .map(|i| Vec3::new((i as f64).cos(), (i as f64 * 1.3).sin(), 0.5))
            .collect();
        let objective = |vs: &[Vec3]| -> f64 {
            vertex_normals(vs, &t).unwrap().iter().zip(&weights).map(|(n, w)| n.dot(w)).sum()
        };
        let sums = normal_sums(&v, &t);
        let grad = vertex_normals_pullback(&v, &t, &sums, &weights);
        let h = 1e-6;
        for i in [0usize, 5, 11, 20] {
            for c in 0..3 {
                let mut vp = v.clone();
                vp[i][c] += h;
                let mut vm = v.clone();
                vm[i][c] -= h;
                let fd = (objective(&vp) - objective(&vm)) / (2.0 * h);
                assert!((fd - grad[i][c]).abs() < 1e-6 * (1.0 + fd.abs()), "{i} {c}: {fd} vs {}", grad[i][c]);
            }
        }
    }
}
