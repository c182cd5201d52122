//! Forward kinematics over a kinematic tree.

use super::rotation::Mat3;
use crate::error::{dim_err, Error, Result};
use crate::tensorcore::{CustomOp, Graph, Tensor, Var};

/// Parent of every joint; the root has none and `parents[i] < i` otherwise.
pub fn validate_parents(parents: &[Option<usize>]) -> Result<()> {
    if parents.is_empty() {
        return Err(Error::InvalidArgument("kinematic tree has no joints".into()));
    }
    if parents[0].is_some() {
        return Err(Error::InvalidArgument("joint 0 must be the root".into()));
    }
    for (i, p) in parents.iter().enumerate().skip(1) {
        match p {
            Some(p) if *p < i => {}
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "joint {} has invalid parent {:?}",
                    i, p
                )))
            }
        }
    }
    Ok(())
}

fn mat_at(d: &[f32], j: usize) -> Mat3 {
    let s = &d[9 * j..9 * j + 9];
    [
        [s[0] as f64, s[1] as f64, s[2] as f64],
        [s[3] as f64, s[4] as f64, s[5] as f64],
        [s[6] as f64, s[7] as f64, s[8] as f64],
    ]
}

fn vec_at(d: &[f32], j: usize) -> [f64; 3] {
    [d[3 * j] as f64, d[3 * j + 1] as f64, d[3 * j + 2] as f64]
}

fn mm(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut o = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            o[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    o
}

fn mv(a: &Mat3, v: &[f64; 3]) -> [f64; 3] {
    [
        a[0][0] * v[0] + a[0][1] * v[1] + a[0][2] * v[2],
        a[1][0] * v[0] + a[1][1] * v[1] + a[1][2] * v[2],
        a[2][0] * v[0] + a[2][1] * v[1] + a[2][2] * v[2],
    ]
}

fn mtv(a: &Mat3, v: &[f64; 3]) -> [f64; 3] {
    [
        a[0][0] * v[0] + a[1][0] * v[1] + a[2][0] * v[2],
        a[0][1] * v[0] + a[1][1] * v[1] + a[2][1] * v[2],
        a[0][2] * v[0] + a[1][2] * v[1] + a[2][2] * v[2],
    ]
}

/// Global rotations and joint positions.
fn chain(rot: &[f32], joints: &[f32], trans: &[f32], parents: &[Option<usize>]) -> (Vec<Mat3>, Vec<[f64; 3]>) {
    let n = parents.len();
    let mut gr = Vec::with_capacity(n);
    let mut gt: Vec<[f64; 3]> = Vec::with_capacity(n);
    for (j, p) in parents.iter().enumerate() {
        let local = mat_at(rot, j);
        let jj = vec_at(joints, j);
        match p {
            None => {
                gr.push(local);
                gt.push([
                    jj[0] + trans[0] as f64,
                    jj[1] + trans[1] as f64,
                    jj[2] + trans[2] as f64,
                ]);
            }
            Some(p) => {
                let jp = vec_at(joints, *p);
                let off = [jj[0] - jp[0], jj[1] - jp[1], jj[2] - jp[2]];
                let r = mm(&gr[*p], &local);
                let t = mv(&gr[*p], &off);
                let tp = gt[*p];
                gr.push(r);
                gt.push([t[0] + tp[0], t[1] + tp[1], t[2] + tp[2]]);
            }
        }
    }
    (gr, gt)
}

struct FkOp {
    parents: Vec<Option<usize>>,
}

impl CustomOp for FkOp {
    fn name(&self) -> &'static str {
        "forward_kinematics"
    }

    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, grad: &Tensor) -> Vec<Option<Tensor>> {
        let (rot, joints, trans) = (inputs[0], inputs[1], inputs[2]);
        let n = self.parents.len();
        let (gr, _) = chain(rot.data(), joints.data(), trans.data(), &self.parents);
        let gd = grad.data();
        let mut d_gr = vec![[[0.0f64; 3]; 3]; n];
        let mut d_gt = vec![[0.0f64; 3]; n];
        let mut d_rot = vec![[[0.0f64; 3]; 3]; n];
        let mut d_j = vec![[0.0f64; 3]; n];
        let mut d_trans = [0.0f64; 3];
        // A_t = G_t − G_R·j
        for j in 0..n {
            let row = &gd[12 * j..12 * j + 12];
            let ga_t = [row[3] as f64, row[7] as f64, row[11] as f64];
            let jj = vec_at(joints.data(), j);
            for a in 0..3 {
                for b in 0..3 {
                    d_gr[j][a][b] = row[4 * a + b] as f64 - ga_t[a] * jj[b];
                }
            }
            d_gt[j] = ga_t;
            let back = mtv(&gr[j], &ga_t);
            for a in 0..3 {
                d_j[j][a] -= back[a];
            }
        }
        for j in (0..n).rev() {
            match self.parents[j] {
                None => {
                    d_rot[j] = d_gr[j];
                    for a in 0..3 {
                        d_j[j][a] += d_gt[j][a];
                        d_trans[a] += d_gt[j][a];
                    }
                }
                Some(p) => {
                    let local = mat_at(rot.data(), j);
                    let jj = vec_at(joints.data(), j);
                    let jp = vec_at(joints.data(), p);
                    let off = [jj[0] - jp[0], jj[1] - jp[1], jj[2] - jp[2]];
                    let g = d_gr[j];
                    let gt = d_gt[j];
                    // G_R,j = G_R,p · R_j
                    for a in 0..3 {
                        for b in 0..3 {
                            let mut s_parent = 0.0;
                            let mut s_local = 0.0;
                            for c in 0..3 {
                                s_parent += g[a][c] * local[b][c];
                                s_local += gr[p][c][a] * g[c][b];
                            }
                            d_gr[p][a][b] += s_parent + gt[a] * off[b];
                            d_rot[j][a][b] = s_local;
                        }
                    }
                    // G_t,j = G_R,p · (j_j − j_p) + G_t,p
                    let back = mtv(&gr[p], &gt);
                    for a in 0..3 {
                        d_j[j][a] += back[a];
                        d_j[p][a] -= back[a];
                        d_gt[p][a] += gt[a];
                    }
                }
            }
        }
        let rot_g: Vec<f32> = d_rot.iter().flatten().flatten().map(|&v| v as f32).collect();
        let j_g: Vec<f32> = d_j.iter().flatten().map(|&v| v as f32).collect();
        vec![
            Some(Tensor::new(rot.shape(), rot_g).expect("shape")),
            Some(Tensor::new(joints.shape(), j_g).expect("shape")),
            Some(Tensor::new(trans.shape(), d_trans.iter().map(|&v| v as f32).collect()).expect("shape")),
        ]
    }
}

/// Differentiable forward kinematics.
///
/// Inputs: local rotations `[J,9]`, rest joint positions `[J,3]`, root
/// translation `[3]`. Output `[J,12]`: per joint the rest-to-posed affine
/// transform `[R | t]` (row-major 3×4), i.e. the global transform composed
/// with a translation by minus the rest joint position.
pub fn forward_kinematics_op(
    g: &mut Graph,
    rot: Var,
    rest_joints: Var,
    trans: Var,
    parents: &[Option<usize>],
) -> Result<Var> {
    validate_parents(parents)?;
    let n = parents.len();
    if g.value(rot).len() != 9 * n || g.value(rest_joints).len() != 3 * n || g.value(trans).len() != 3 {
        return dim_err(
            "forward_kinematics",
            format!(
                "rot {:?}, joints {:?}, trans {:?} for {} joints",
                g.shape(rot),
                g.shape(rest_joints),
                g.shape(trans),
                n
            ),
        );
    }
    let (rd, jd, td) = (g.value(rot).data(), g.value(rest_joints).data(), g.value(trans).data());
    let (gr, gt) = chain(rd, jd, td, parents);
    let mut out = Vec::with_capacity(12 * n);
    for j in 0..n {
        let jj = vec_at(jd, j);
        let rj = mv(&gr[j], &jj);
        for a in 0..3 {
            out.extend_from_slice(&[
                gr[j][a][0] as f32,
                gr[j][a][1] as f32,
                gr[j][a][2] as f32,
                (gt[j][a] - rj[a]) as f32,
            ]);
        }
    }
    let value = Tensor::new(&[n, 12], out)?;
    Ok(g.custom(
        &[rot, rest_joints, trans],
        value,
        Box::new(FkOp {
            parents: parents.to_vec(),
        }),
    ))
}

/// Global joint transforms as `[J,4,4]` homogeneous matrices.
pub fn global_transforms(rot: &Tensor, rest_joints: &Tensor, trans: &Tensor, parents: &[Option<usize>]) -> Result<Tensor> {
    validate_parents(parents)?;
    let n = parents.len();
    if rot.len() != 9 * n || rest_joints.len() != 3 * n || trans.len() != 3 {
        return dim_err("forward_kinematics", "inconsistent input sizes");
    }
    let (gr, gt) = chain(rot.data(), rest_joints.data(), trans.data(), parents);
    let mut out = Vec::with_capacity(16 * n);
    for j in 0..n {
        for a in 0..3 {
            out.extend_from_slice(&[
                gr[j][a][0] as f32,
                gr[j][a][1] as f32,
                gr[j][a][2] as f32,
                gt[j][a] as f32,
            ]);
        }
        out.extend_from_slice(&[0.0, 0.0, 0.0, 1.0]);
    }
    Tensor::new(&[n, 4, 4], out)
}

struct AffineOp;

impl CustomOp for AffineOp {
    fn name(&self) -> &'static str {
        "apply_affine"
    }

    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, grad: &Tensor) -> Vec<Option<Tensor>> {
        let (t, p) = (inputs[0], inputs[1]);
        let n = p.len() / 3;
        let mut gt = vec![0.0f32; 12 * n];
        let mut gp = vec![0.0f32; 3 * n];
        let (td, pd, gd) = (t.data(), p.data(), grad.data());
        for i in 0..n {
            let m = &td[12 * i..12 * i + 12];
            let x = &pd[3 * i..3 * i + 3];
            let g = &gd[3 * i..3 * i + 3];
            for a in 0..3 {
                for b in 0..3 {
                    gt[12 * i + 4 * a + b] = g[a] * x[b];
                }
                gt[12 * i + 4 * a + 3] = g[a];
            }
            for b in 0..3 {
                gp[3 * i + b] = (g[0] as f64 * m[b] as f64
                    + g[1] as f64 * m[4 + b] as f64
                    + g[2] as f64 * m[8 + b] as f64) as f32;
            }
        }
        vec![
            Some(Tensor::new(t.shape(), gt).expect("shape")),
            Some(Tensor::new(p.shape(), gp).expect("shape")),
        ]
    }
}

/// Per-point affine map: `T[P,12]` (row-major 3×4) applied to `p[P,3]`.
pub fn apply_affine(g: &mut Graph, transforms: Var, points: Var) -> Result<Var> {
    let (t, p) = (g.value(transforms), g.value(points));
    let n = p.len() / 3;
    if p.len() % 3 != 0 || t.len() != 12 * n {
        return dim_err("apply_affine", format!("T {:?} vs points {:?}", t.shape(), p.shape()));
    }
    let mut out = Vec::with_capacity(3 * n);
    for i in 0..n {
        let m = &t.data()[12 * i..12 * i + 12];
        let x = &p.data()[3 * i..3 * i + 3];
        for a in 0..3 {
            let v = m[4 * a] as f64 * x[0] as f64
                + m[4 * a + 1] as f64 * x[1] as f64
                + m[4 * a + 2] as f64 * x[2] as f64
                + m[4 * a + 3] as f64;
            out.push(v as f32);
        }
    }
    let value = Tensor::new(&[n, 3], out)?;
    Ok(g.custom(&[transforms, points], value, Box::new(AffineOp)))
}
