//! Meshes, exact point–triangle distance, nearest-neighbor acceleration and
//! surface sampling.

use rand::Rng;

use crate::error::{dim_err, Error, Result};
use crate::tensorcore::init::rng_for;
use crate::tensorcore::Tensor;

pub type P3 = [f64; 3];

/// Triangle mesh with `[V,3]` vertices.
#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    pub vertices: Tensor,
    pub faces: Vec<[usize; 3]>,
}

impl Mesh {
    pub fn new(vertices: Tensor, faces: Vec<[usize; 3]>) -> Result<Self> {
        if vertices.rank() != 2 || vertices.dim(1) != 3 {
            return dim_err("Mesh", format!("vertices {:?}", vertices.shape()));
        }
        let v = vertices.dim(0);
        if let Some(f) = faces.iter().find(|f| f.iter().any(|&i| i >= v)) {
            return Err(Error::InvalidArgument(format!("face {f:?} indexes past {v} vertices")));
        }
        Ok(Self { vertices, faces })
    }

    pub fn vertex(&self, i: usize) -> P3 {
        point(&self.vertices, i)
    }

    pub fn triangle(&self, f: usize) -> [P3; 3] {
        let [a, b, c] = self.faces[f];
        [self.vertex(a), self.vertex(b), self.vertex(c)]
    }

    /// Every undirected edge is shared by exactly two faces.
    pub fn is_watertight(&self) -> bool {
        let mut edges: Vec<(usize, usize)> = self
            .faces
            .iter()
            .flat_map(|f| (0..3).map(move |k| (f[k].min(f[(k + 1) % 3]), f[k].max(f[(k + 1) % 3]))))
            .collect();
        if edges.is_empty() {
            return false;
        }
        edges.sort_unstable();
        let mut i = 0;
        while i < edges.len() {
            let mut j = i;
            while j < edges.len() && edges[j] == edges[i] {
                j += 1;
            }
            if j - i != 2 {
                return false;
            }
            i = j;
        }
        true
    }
}

pub fn point(t: &Tensor, i: usize) -> P3 {
    let d = &t.data()[3 * i..3 * i + 3];
    [d[0] as f64, d[1] as f64, d[2] as f64]
}

pub fn sub(a: P3, b: P3) -> P3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn dot(a: P3, b: P3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross(a: P3, b: P3) -> P3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

pub fn dist2(a: P3, b: P3) -> f64 {
    let d = sub(a, b);
    dot(d, d)
}

pub fn triangle_area(t: &[P3; 3]) -> f64 {
    let c = cross(sub(t[1], t[0]), sub(t[2], t[0]));
    0.5 * dot(c, c).sqrt()
}

/// Barycentric weights of the point of triangle `t` closest to `p`
/// (Voronoi-region case analysis).
pub fn closest_point_barycentric(p: P3, t: &[P3; 3]) -> [f64; 3] {
    let [a, b, c] = *t;
    let ab = sub(b, a);
    let ac = sub(c, a);
    let ap = sub(p, a);
    let d1 = dot(ab, ap);
    let d2 = dot(ac, ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return [1.0, 0.0, 0.0];
    }
    let bp = sub(p, b);
    let d3 = dot(ab, bp);
    let d4 = dot(ac, bp);
    if d3 >= 0.0 && d4 <= d3 {
        return [0.0, 1.0, 0.0];
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return [1.0 - v, v, 0.0];
    }
    let cp = sub(p, c);
    let d5 = dot(ab, cp);
    let d6 = dot(ac, cp);
    if d6 >= 0.0 && d5 <= d6 {
        return [0.0, 0.0, 1.0];
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return [1.0 - w, 0.0, w];
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return [0.0, 1.0 - w, w];
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    [1.0 - v - w, v, w]
}

pub fn blend(t: &[P3; 3], w: [f64; 3]) -> P3 {
    let mut out = [0.0; 3];
    for k in 0..3 {
        for (a, o) in out.iter_mut().enumerate() {
            *o += w[k] * t[k][a];
        }
    }
    out
}

/// Closest surface point of `mesh` to `p`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurfaceHit {
    pub face: usize,
    pub bary: [f64; 3],
    pub dist2: f64,
}

#[derive(Clone, Copy, Debug)]
struct Aabb {
    lo: P3,
    hi: P3,
}

impl Aabb {
    fn empty() -> Self {
        Self { lo: [f64::INFINITY; 3], hi: [f64::NEG_INFINITY; 3] }
    }

    fn grow(&mut self, p: P3) {
        for a in 0..3 {
            self.lo[a] = self.lo[a].min(p[a]);
            self.hi[a] = self.hi[a].max(p[a]);
        }
    }

    fn dist2(&self, p: P3) -> f64 {
        let mut s = 0.0;
        for a in 0..3 {
            let d = (self.lo[a] - p[a]).max(0.0).max(p[a] - self.hi[a]);
            s += d * d;
        }
        s
    }
}

enum Node {
    Leaf { bounds: Aabb, faces: Vec<usize> },
    Inner { bounds: Aabb, left: usize, right: usize },
}

impl Node {
    fn bounds(&self) -> &Aabb {
        match self {
            Node::Leaf { bounds, .. } | Node::Inner { bounds, .. } => bounds,
        }
    }
}

/// Bounding-volume hierarchy over the triangles of one mesh, for exact
/// closest-point queries.
pub struct TriangleBvh {
    tris: Vec<[P3; 3]>,
    nodes: Vec<Node>,
}

impl TriangleBvh {
    pub fn new(mesh: &Mesh) -> Self {
        let tris: Vec<[P3; 3]> = (0..mesh.faces.len()).map(|f| mesh.triangle(f)).collect();
        let mut bvh = Self { tris, nodes: Vec::new() };
        if !bvh.tris.is_empty() {
            let all: Vec<usize> = (0..bvh.tris.len()).collect();
            bvh.build(all);
        }
        bvh
    }

    fn build(&mut self, mut faces: Vec<usize>) -> usize {
        let mut bounds = Aabb::empty();
        for &f in &faces {
            for v in self.tris[f] {
                bounds.grow(v);
            }
        }
        if faces.len() <= 4 {
            self.nodes.push(Node::Leaf { bounds, faces });
            return self.nodes.len() - 1;
        }
        let centroid = |t: &[P3; 3], a: usize| t[0][a] + t[1][a] + t[2][a];
        let axis = (0..3)
            .max_by(|&a, &b| (bounds.hi[a] - bounds.lo[a]).total_cmp(&(bounds.hi[b] - bounds.lo[b])))
            .unwrap_or(0);
        faces.sort_by(|&x, &y| centroid(&self.tris[x], axis).total_cmp(&centroid(&self.tris[y], axis)).then(x.cmp(&y)));
        let right_half = faces.split_off(faces.len() / 2);
        let slot = self.nodes.len();
        self.nodes.push(Node::Leaf { bounds, faces: Vec::new() });
        let left = self.build(faces);
        let right = self.build(right_half);
        self.nodes[slot] = Node::Inner { bounds, left, right };
        slot
    }

    pub fn closest(&self, p: P3) -> Option<SurfaceHit> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best: Option<SurfaceHit> = None;
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            let bound = best.map_or(f64::INFINITY, |b| b.dist2);
            if self.nodes[n].bounds().dist2(p) > bound {
                continue;
            }
            match &self.nodes[n] {
                Node::Leaf { faces, .. } => {
                    for &f in faces {
                        let w = closest_point_barycentric(p, &self.tris[f]);
                        let d = dist2(p, blend(&self.tris[f], w));
                        let better = match best {
                            None => true,
                            Some(b) => d < b.dist2 || (d == b.dist2 && f < b.face),
                        };
                        if better {
                            best = Some(SurfaceHit { face: f, bary: w, dist2: d });
                        }
                    }
                }
                Node::Inner { left, right, .. } => {
                    let (dl, dr) = (self.nodes[*left].bounds().dist2(p), self.nodes[*right].bounds().dist2(p));
                    // Push the farther child first so the nearer one is searched first.
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
        best
    }
}

/// Uniform grid over a point set for exact nearest-neighbor queries.
pub struct PointGrid {
    pts: Vec<P3>,
    lo: P3,
    cell: f64,
    dims: [usize; 3],
    starts: Vec<usize>,
    items: Vec<usize>,
}

impl PointGrid {
    pub fn new(points: &Tensor) -> Self {
        let n = points.len() / 3;
        let pts: Vec<P3> = (0..n).map(|i| point(points, i)).collect();
        let mut b = Aabb::empty();
        for &p in &pts {
            b.grow(p);
        }
        if n == 0 {
            b = Aabb { lo: [0.0; 3], hi: [0.0; 3] };
        }
        let ext: Vec<f64> = (0..3).map(|a| b.hi[a] - b.lo[a]).collect();
        let vol: f64 = ext.iter().map(|e| e.max(1e-9)).product();
        // Roughly two points per cell.
        let cell = ((vol * 2.0 / n.max(1) as f64).cbrt()).max(ext.iter().cloned().fold(0.0, f64::max) / 64.0).max(1e-9);
        let dims = [0, 1, 2].map(|a| ((ext[a] / cell).floor() as usize + 1).min(256));
        let cell_of = |p: P3| -> usize {
            let c: Vec<usize> = (0..3).map(|a| (((p[a] - b.lo[a]) / cell).floor().max(0.0) as usize).min(dims[a] - 1)).collect();
            (c[0] * dims[1] + c[1]) * dims[2] + c[2]
        };
        let ncells = dims[0] * dims[1] * dims[2];
        let mut counts = vec![0usize; ncells + 1];
        for &p in &pts {
            counts[cell_of(p) + 1] += 1;
        }
        for i in 0..ncells {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut items = vec![0usize; n];
        for (i, &p) in pts.iter().enumerate() {
            let c = cell_of(p);
            items[fill[c]] = i;
            fill[c] += 1;
        }
        Self { pts, lo: b.lo, cell, dims, starts: counts, items }
    }

    /// Nearest point index and squared distance; ties go to the lower index.
    pub fn nearest(&self, q: P3) -> Option<(usize, f64)> {
        if self.pts.is_empty() {
            return None;
        }
        let c: [i64; 3] = [0, 1, 2].map(|a| {
            (((q[a] - self.lo[a]) / self.cell).floor() as i64).clamp(0, self.dims[a] as i64 - 1)
        });
        let mut best: Option<(usize, f64)> = None;
        let max_r = *self.dims.iter().max().unwrap() as i64;
        for r in 0..=max_r {
            for i in (c[0] - r).max(0)..=(c[0] + r).min(self.dims[0] as i64 - 1) {
                for j in (c[1] - r).max(0)..=(c[1] + r).min(self.dims[1] as i64 - 1) {
                    for k in (c[2] - r).max(0)..=(c[2] + r).min(self.dims[2] as i64 - 1) {
                        let shell = (i - c[0]).abs().max((j - c[1]).abs()).max((k - c[2]).abs());
                        if shell != r {
                            continue;
                        }
                        let cell = (i as usize * self.dims[1] + j as usize) * self.dims[2] + k as usize;
                        for &idx in &self.items[self.starts[cell]..self.starts[cell + 1]] {
                            let d = dist2(q, self.pts[idx]);
                            let better = match best {
                                None => true,
                                Some((bi, bd)) => d < bd || (d == bd && idx < bi),
                            };
                            if better {
                                best = Some((idx, d));
                            }
                        }
                    }
                }
            }
            if let Some((_, bd)) = best {
                // Distance from q to the outside of the searched block of cells.
                let mut reach = f64::INFINITY;
                for a in 0..3 {
                    if c[a] - r > 0 {
                        reach = reach.min(q[a] - (self.lo[a] + (c[a] - r) as f64 * self.cell));
                    }
                    if c[a] + r < self.dims[a] as i64 - 1 {
                        reach = reach.min(self.lo[a] + (c[a] + r + 1) as f64 * self.cell - q[a]);
                    }
                }
                if reach == f64::INFINITY || (reach > 0.0 && bd < reach * reach) {
                    break;
                }
            }
        }
        best
    }
}

/// Fixed surface-sampling pattern: triangle index plus barycentric weights per
/// sample. Reapplying it to deformed vertices keeps samples on the surface.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplePattern {
    pub faces: Vec<usize>,
    pub bary: Vec<[f32; 3]>,
}

impl SamplePattern {
    /// Area-weighted triangle choice and uniform barycentric coordinates.
    pub fn draw(mesh: &Mesh, n: usize, seed: u64) -> Result<Self> {
        let mut cum = Vec::with_capacity(mesh.faces.len());
        let mut total = 0.0f64;
        for f in 0..mesh.faces.len() {
            total += triangle_area(&mesh.triangle(f));
            cum.push(total);
        }
        if !(total > 0.0) {
            return Err(Error::InvalidArgument("cannot sample a mesh with zero surface area".into()));
        }
        let mut rng = rng_for(seed, "sample_surface");
        let mut faces = Vec::with_capacity(n);
        let mut bary = Vec::with_capacity(n);
        for _ in 0..n {
            let u: f64 = rng.random::<f64>() * total;
            let f = cum.partition_point(|&c| c <= u).min(cum.len() - 1);
            let (r1, r2): (f64, f64) = (rng.random(), rng.random());
            let s = r1.sqrt();
            faces.push(f);
            bary.push([(1.0 - s) as f32, (s * (1.0 - r2)) as f32, (s * r2) as f32]);
        }
        Ok(Self { faces, bary })
    }

    pub fn len(&self) -> usize {
        self.faces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    pub fn apply(&self, vertices: &Tensor, faces: &[[usize; 3]]) -> Tensor {
        let mut out = Vec::with_capacity(3 * self.len());
        for (f, w) in self.faces.iter().zip(&self.bary) {
            let tri = faces[*f];
            for a in 0..3 {
                let mut acc = 0.0f64;
                for k in 0..3 {
                    acc += w[k] as f64 * vertices.data()[3 * tri[k] + a] as f64;
                }
                out.push(acc as f32);
            }
        }
        Tensor::new(&[self.len(), 3], out).expect("n×3")
    }
}

/// `n` area-uniform surface samples, deterministic per seed.
pub fn sample_surface(mesh: &Mesh, n: usize, seed: u64) -> Result<Tensor> {
    Ok(SamplePattern::draw(mesh, n, seed)?.apply(&mesh.vertices, &mesh.faces))
}

/// Axis-aligned box as a closed, outward-oriented 12-triangle mesh.
pub fn box_mesh(lo: [f32; 3], hi: [f32; 3]) -> Mesh {
    let mut v = Vec::with_capacity(24);
    for i in 0..8 {
        v.push(if i & 1 == 0 { lo[0] } else { hi[0] });
        v.push(if i & 2 == 0 { lo[1] } else { hi[1] });
        v.push(if i & 4 == 0 { lo[2] } else { hi[2] });
    }
    let faces = vec![
        [0, 2, 1], [1, 2, 3], // z = lo
        [4, 5, 6], [5, 7, 6], // z = hi
        [0, 1, 4], [1, 5, 4], // y = lo
        [2, 6, 3], [3, 6, 7], // y = hi
        [0, 4, 2], [2, 4, 6], // x = lo
        [1, 3, 5], [3, 7, 5], // x = hi
    ];
    Mesh { vertices: Tensor::new(&[8, 3], v).expect("8×3"), faces }
}
