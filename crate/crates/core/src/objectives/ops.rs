//! Differentiable geometry losses as custom graph ops.

use crate::error::{dim_err, Result};
use crate::tensorcore::{CustomOp, Graph, Tensor, Var};

use super::geometry::{point, sub, Mesh, PointGrid, SamplePattern, TriangleBvh};

struct GatherOp {
    pattern: SamplePattern,
    faces: Vec<[usize; 3]>,
}

impl CustomOp for GatherOp {
    fn name(&self) -> &'static str {
        "surface_gather"
    }

    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, grad: &Tensor) -> Vec<Option<Tensor>> {
        let mut gv = vec![0.0f64; inputs[0].len()];
        for (i, (f, w)) in self.pattern.faces.iter().zip(&self.pattern.bary).enumerate() {
            let tri = self.faces[*f];
            for k in 0..3 {
                for a in 0..3 {
                    gv[3 * tri[k] + a] += w[k] as f64 * grad.data()[3 * i + a] as f64;
                }
            }
        }
        vec![Some(Tensor::new(inputs[0].shape(), gv.into_iter().map(|v| v as f32).collect()).expect("shape"))]
    }
}

/// Surface samples of a (possibly deforming) mesh at a fixed pattern.
pub fn surface_samples_var(g: &mut Graph, vertices: Var, faces: &[[usize; 3]], pattern: &SamplePattern) -> Result<Var> {
    let v = g.value(vertices);
    if v.rank() != 2 || v.dim(1) != 3 {
        return dim_err("surface_samples", format!("vertices {:?}", v.shape()));
    }
    let value = pattern.apply(v, faces);
    Ok(g.custom(
        &[vertices],
        value,
        Box::new(GatherOp { pattern: pattern.clone(), faces: faces.to_vec() }),
    ))
}

/// Nearest neighbor of every `from` point in `to`.
fn nearest_all(from: &Tensor, to: &Tensor) -> Vec<(usize, f64)> {
    let grid = PointGrid::new(to);
    (0..from.len() / 3)
        .map(|i| {
            let (j, d2) = grid.nearest(point(from, i)).expect("nonempty");
            (j, d2.sqrt())
        })
        .collect()
}

struct ChamferOp {
    ab: Vec<(usize, f64)>,
    ba: Vec<(usize, f64)>,
}

fn accumulate_pull(ga: &mut [f64], gb: &mut [f64], a: &Tensor, b: &Tensor, i: usize, j: usize, d: f64, scale: f64) {
    if d <= 0.0 {
        return;
    }
    let diff = sub(point(a, i), point(b, j));
    for k in 0..3 {
        let v = scale * diff[k] / d;
        ga[3 * i + k] += v;
        gb[3 * j + k] -= v;
    }
}

impl CustomOp for ChamferOp {
    fn name(&self) -> &'static str {
        "chamfer"
    }

    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, grad: &Tensor) -> Vec<Option<Tensor>> {
        let (a, b) = (inputs[0], inputs[1]);
        let g = grad.item() as f64;
        let mut ga = vec![0.0f64; a.len()];
        let mut gb = vec![0.0f64; b.len()];
        let sa = 0.5 * g / self.ab.len() as f64;
        for (i, &(j, d)) in self.ab.iter().enumerate() {
            accumulate_pull(&mut ga, &mut gb, a, b, i, j, d, sa);
        }
        let sb = 0.5 * g / self.ba.len() as f64;
        for (j, &(i, d)) in self.ba.iter().enumerate() {
            accumulate_pull(&mut gb, &mut ga, b, a, j, i, d, sb);
        }
        let to = |t: &Tensor, v: Vec<f64>| Some(Tensor::new(t.shape(), v.into_iter().map(|x| x as f32).collect()).expect("shape"));
        vec![to(a, ga), to(b, gb)]
    }
}

fn check_cloud(op: &'static str, t: &Tensor) -> Result<()> {
    if t.rank() != 2 || t.dim(1) != 3 || t.dim(0) == 0 {
        return dim_err(op, format!("point set {:?}", t.shape()));
    }
    Ok(())
}

/// Symmetric ½-½ mean nearest-neighbor distance between two clouds.
pub fn chamfer_var(g: &mut Graph, a: Var, b: Var) -> Result<Var> {
    let (ta, tb) = (g.value(a), g.value(b));
    check_cloud("chamfer", ta)?;
    check_cloud("chamfer", tb)?;
    let ab = nearest_all(ta, tb);
    let ba = nearest_all(tb, ta);
    let value = 0.5 * ab.iter().map(|x| x.1).sum::<f64>() / ab.len() as f64
        + 0.5 * ba.iter().map(|x| x.1).sum::<f64>() / ba.len() as f64;
    Ok(g.custom(&[a, b], Tensor::scalar(value as f32), Box::new(ChamferOp { ab, ba })))
}

struct P2sOp {
    faces: Vec<[usize; 3]>,
    /// Per point: face, barycentric weights of the closest point, distance.
    hits: Vec<(usize, [f64; 3], f64)>,
}

impl CustomOp for P2sOp {
    fn name(&self) -> &'static str {
        "point_to_surface"
    }

    // At fixed closest-point parameters the distance is differentiable in
    // both the query points and the triangle vertices; by the envelope
    // theorem the dependence of those parameters contributes nothing.
    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, grad: &Tensor) -> Vec<Option<Tensor>> {
        let (p, v) = (inputs[0], inputs[1]);
        let s = grad.item() as f64 / self.hits.len() as f64;
        let mut gp = vec![0.0f64; p.len()];
        let mut gv = vec![0.0f64; v.len()];
        for (i, &(f, w, d)) in self.hits.iter().enumerate() {
            if d <= 0.0 {
                continue;
            }
            let tri = self.faces[f];
            let mut c = [0.0; 3];
            for k in 0..3 {
                let q = point(v, tri[k]);
                for a in 0..3 {
                    c[a] += w[k] * q[a];
                }
            }
            let diff = sub(point(p, i), c);
            for a in 0..3 {
                let u = s * diff[a] / d;
                gp[3 * i + a] += u;
                for k in 0..3 {
                    gv[3 * tri[k] + a] -= u * w[k];
                }
            }
        }
        let to = |t: &Tensor, v: Vec<f64>| Some(Tensor::new(t.shape(), v.into_iter().map(|x| x as f32).collect()).expect("shape"));
        vec![to(p, gp), to(v, gv)]
    }
}

/// Mean exact distance from each point to the mesh surface.
pub fn point_to_surface_var(g: &mut Graph, points: Var, vertices: Var, faces: &[[usize; 3]]) -> Result<Var> {
    let tp = g.value(points);
    check_cloud("point_to_surface", tp)?;
    if faces.is_empty() {
        return dim_err("point_to_surface", "mesh has no faces");
    }
    let mesh = Mesh::new(g.value(vertices).clone(), faces.to_vec())?;
    let bvh = TriangleBvh::new(&mesh);
    let hits: Vec<(usize, [f64; 3], f64)> = (0..tp.len() / 3)
        .map(|i| {
            let h = bvh.closest(point(tp, i)).expect("faces nonempty");
            (h.face, h.bary, h.dist2.sqrt())
        })
        .collect();
    let value = hits.iter().map(|h| h.2).sum::<f64>() / hits.len() as f64;
    Ok(g.custom(
        &[points, vertices],
        Tensor::scalar(value as f32),
        Box::new(P2sOp { faces: faces.to_vec(), hits }),
    ))
}
