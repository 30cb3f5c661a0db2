//! Exact point-to-triangle-mesh queries over an AABB tree.

use crate::Vec3;

const LEAF_SIZE: usize = 4;

/// Closest point on triangle `(a, b, c)` to `p` and its barycentrics.
/// Covers the vertex, edge and face regions.
pub fn closest_point_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> (Vec3, [f64; 3]) {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (*a, [1.0, 0.0, 0.0]);
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (*b, [0.0, 1.0, 0.0]);
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (a + ab * v, [1.0 - v, v, 0.0]);
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (*c, [0.0, 0.0, 1.0]);
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (a + ac * w, [1.0 - w, 0.0, w]);
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (b + (c - b) * w, [0.0, 1.0 - w, w]);
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (a + ab * v + ac * w, [1.0 - v - w, v, w])
}

#[derive(Debug, Clone, Copy)]
struct Aabb {
    lo: Vec3,
    hi: Vec3,
}

impl Aabb {
    fn empty() -> Self {
        Aabb {
            lo: Vec3::repeat(f64::INFINITY),
            hi: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    fn grow(&mut self, p: &Vec3) {
        self.lo = self.lo.inf(p);
        self.hi = self.hi.sup(p);
    }

    fn dist2(&self, p: &Vec3) -> f64 {
        let mut d = 0.0;
        for k in 0..3 {
            let e = (self.lo[k] - p[k]).max(0.0).max(p[k] - self.hi[k]);
            d += e * e;
        }
        d
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { bounds: Aabb, start: usize, end: usize },
    Inner { bounds: Aabb, left: usize, right: usize },
}

impl Node {
    fn bounds(&self) -> &Aabb {
        match self {
            Node::Leaf { bounds, .. } | Node::Inner { bounds, .. } => bounds,
        }
    }
}

/// Nearest-surface query result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceHit {
    pub distance: f64,
    pub point: Vec3,
    pub triangle: usize,
    pub barycentric: [f64; 3],
}

/// Immutable bounding-volume hierarchy over a triangle mesh.
#[derive(Debug, Clone)]
pub struct Bvh {
    vertices: Vec<Vec3>,
    triangles: Vec<[u32; 3]>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl Bvh {
    /// Builds the tree. Triangles must index into `vertices`.
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> Self {
        let centroids: Vec<Vec3> = triangles
            .iter()
            .map(|t| (vertices[t[0] as usize] + vertices[t[1] as usize] + vertices[t[2] as usize]) / 3.0)
            .collect();
        let mut bvh = Bvh {
            order: (0..triangles.len()).collect(),
            vertices,
            triangles,
            nodes: Vec::new(),
        };
        if !bvh.triangles.is_empty() {
            bvh.build(0, bvh.triangles.len(), &centroids);
        }
        bvh
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    fn tri_bounds(&self, start: usize, end: usize) -> Aabb {
        let mut b = Aabb::empty();
        for &t in &self.order[start..end] {
            for &v in &self.triangles[t] {
                b.grow(&self.vertices[v as usize]);
            }
        }
        b
    }

    fn build(&mut self, start: usize, end: usize, centroids: &[Vec3]) -> usize {
        let bounds = self.tri_bounds(start, end);
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { bounds, start, end });
            return id;
        }
        let mut cb = Aabb::empty();
        for &t in &self.order[start..end] {
            cb.grow(&centroids[t]);
        }
        let ext = cb.hi - cb.lo;
        let axis = ext.imax();
        self.order[start..end].sort_by(|&a, &b| centroids[a][axis].total_cmp(&centroids[b][axis]).then(a.cmp(&b)));
        let mid = (start + end) / 2;
        // placeholder, patched below
        self.nodes.push(Node::Leaf { bounds, start, end });
        let left = self.build(start, mid, centroids);
        let right = self.build(mid, end, centroids);
        self.nodes[id] = Node::Inner { bounds, left, right };
        id
    }

    fn triangle_hit(&self, t: usize, p: &Vec3) -> (f64, Vec3, [f64; 3]) {
        let [a, b, c] = self.triangles[t].map(|v| self.vertices[v as usize]);
        let (q, bary) = closest_point_on_triangle(p, &a, &b, &c);
        ((q - p).norm_squared(), q, bary)
    }

    /// Nearest surface point; ties go to the lowest triangle id. `None`
    /// for an empty mesh.
    pub fn nearest(&self, p: &Vec3) -> Option<SurfaceHit> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best: Option<(f64, usize, Vec3, [f64; 3])> = None;
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            if let Some((bd, ..)) = best {
                if node.bounds().dist2(p) > bd {
                    continue;
                }
            }
            match node {
                Node::Leaf { start, end, .. } => {
                    for &t in &self.order[*start..*end] {
                        let (d, q, bary) = self.triangle_hit(t, p);
                        let better = match best {
                            None => true,
                            Some((bd, bt, ..)) => d < bd || (d == bd && t < bt),
                        };
                        if better {
                            best = Some((d, t, q, bary));
                        }
                    }
                }
                Node::Inner { left, right, .. } => {
                    let dl = self.nodes[*left].bounds().dist2(p);
                    let dr = self.nodes[*right].bounds().dist2(p);
                    // visit the nearer child first
                    if dl <= dr {
                        stack.push(*right);
                        stack.push(*left);
                    } else {
                        stack.push(*left);
                        stack.push(*right);
                    }
                }
            }
        }
        best.map(|(d, t, q, bary)| SurfaceHit {
            distance: d.sqrt(),
            point: q,
            triangle: t,
            barycentric: bary,
        })
    }

    /// Reference linear scan with the same tie rule.
    pub fn nearest_brute_force(&self, p: &Vec3) -> Option<SurfaceHit> {
        let mut best: Option<(f64, usize, Vec3, [f64; 3])> = None;
        for t in 0..self.triangles.len() {
            let (d, q, bary) = self.triangle_hit(t, p);
            if best.is_none_or(|(bd, ..)| d < bd) {
                best = Some((d, t, q, bary));
            }
        }
        best.map(|(d, t, q, bary)| SurfaceHit {
            distance: d.sqrt(),
            point: q,
            triangle: t,
            barycentric: bary,
        })
    }
}
