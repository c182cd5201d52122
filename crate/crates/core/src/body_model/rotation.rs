//! Axis-angle ↔ rotation matrix via Rodrigues' formula, with a batched
//! differentiable op.

use crate::error::{dim_err, Result};
use crate::tensorcore::{CustomOp, Graph, Tensor, Var};

pub type Mat3 = [[f64; 3]; 3];

// Below this angle the closed forms (the derivative ones in particular) lose
// too many digits to cancellation; the series are exact to f64 here.
const SMALL_ANGLE: f64 = 0.05;

fn skew(r: [f64; 3]) -> Mat3 {
    [[0.0, -r[2], r[1]], [r[2], 0.0, -r[0]], [-r[1], r[0], 0.0]]
}

fn matmul3(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

/// Coefficients `a = sinθ/θ`, `b = (1−cosθ)/θ²` and their θ-derivatives
/// divided by θ, with Taylor expansions near zero.
fn coefficients(theta: f64) -> (f64, f64, f64, f64) {
    if theta < SMALL_ANGLE {
        series_coefficients(theta)
    } else {
        closed_coefficients(theta)
    }
}

fn series_coefficients(theta: f64) -> (f64, f64, f64, f64) {
    let t2 = theta * theta;
    (
        1.0 - t2 / 6.0 * (1.0 - t2 / 20.0 * (1.0 - t2 / 42.0 * (1.0 - t2 / 72.0))),
        0.5 - t2 / 24.0 * (1.0 - t2 / 30.0 * (1.0 - t2 / 56.0 * (1.0 - t2 / 90.0))),
        -1.0 / 3.0 + t2 / 30.0 - t2 * t2 / 840.0 + t2 * t2 * t2 / 45360.0,
        -1.0 / 12.0 + t2 / 180.0 - t2 * t2 / 6720.0 + t2 * t2 * t2 / 453600.0,
    )
}

fn closed_coefficients(theta: f64) -> (f64, f64, f64, f64) {
    let t2 = theta * theta;
    let (s, c) = theta.sin_cos();
    (
        s / theta,
        (1.0 - c) / t2,
        (theta * c - s) / (t2 * theta),
        (theta * s - 2.0 * (1.0 - c)) / (t2 * t2),
    )
}

/// Rotation matrix `I + a[r]ₓ + b[r]ₓ²` for the axis-angle vector `r`.
pub fn rodrigues_f64(r: [f64; 3]) -> Mat3 {
    let theta = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
    let (a, b, _, _) = coefficients(theta);
    let k = skew(r);
    let k2 = matmul3(&k, &k);
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = if i == j { 1.0 } else { 0.0 } + a * k[i][j] + b * k2[i][j];
        }
    }
    out
}

/// `Σ_pq G_pq ∂R_pq/∂r_i` for each axis-angle component.
fn rodrigues_vjp(r: [f64; 3], grad: &Mat3) -> [f64; 3] {
    let theta = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
    let (a, b, ca, cb) = coefficients(theta);
    let k = skew(r);
    let k2 = matmul3(&k, &k);
    let dot = |m: &Mat3| -> f64 {
        let mut s = 0.0;
        for p in 0..3 {
            for q in 0..3 {
                s += grad[p][q] * m[p][q];
            }
        }
        s
    };
    let gk = dot(&k);
    let gk2 = dot(&k2);
    let mut out = [0.0; 3];
    for (i, o) in out.iter_mut().enumerate() {
        let mut e = [0.0; 3];
        e[i] = 1.0;
        let ei = skew(e);
        let ek = matmul3(&ei, &k);
        let ke = matmul3(&k, &ei);
        let mut sym = [[0.0; 3]; 3];
        for p in 0..3 {
            for q in 0..3 {
                sym[p][q] = ek[p][q] + ke[p][q];
            }
        }
        *o = ca * r[i] * gk + a * dot(&ei) + cb * r[i] * gk2 + b * dot(&sym);
    }
    out
}

/// Rotation matrix for a single axis-angle vector `[3]` → `[3,3]`.
pub fn rodrigues(axis_angle: &Tensor) -> Result<Tensor> {
    if axis_angle.len() != 3 {
        return dim_err("rodrigues", format!("expected 3 values, got {:?}", axis_angle.shape()));
    }
    let d = axis_angle.data();
    let m = rodrigues_f64([d[0] as f64, d[1] as f64, d[2] as f64]);
    Tensor::new(&[3, 3], m.iter().flatten().map(|&v| v as f32).collect())
}

struct RodriguesOp;

impl CustomOp for RodriguesOp {
    fn name(&self) -> &'static str {
        "rodrigues"
    }

    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, grad: &Tensor) -> Vec<Option<Tensor>> {
        let r = inputs[0];
        let n = r.len() / 3;
        let mut out = Vec::with_capacity(n * 3);
        for j in 0..n {
            let rv = [
                r.data()[3 * j] as f64,
                r.data()[3 * j + 1] as f64,
                r.data()[3 * j + 2] as f64,
            ];
            let gd = &grad.data()[9 * j..9 * j + 9];
            let gm = [
                [gd[0] as f64, gd[1] as f64, gd[2] as f64],
                [gd[3] as f64, gd[4] as f64, gd[5] as f64],
                [gd[6] as f64, gd[7] as f64, gd[8] as f64],
            ];
            out.extend(rodrigues_vjp(rv, &gm).iter().map(|&v| v as f32));
        }
        vec![Some(Tensor::new(r.shape(), out).expect("same shape"))]
    }
}

/// Batched differentiable Rodrigues: `[J,3]` (or `[3J]`) → `[J,9]` row-major matrices.
pub fn rodrigues_batch(g: &mut Graph, axis_angles: Var) -> Result<Var> {
    let t = g.value(axis_angles);
    if t.len() % 3 != 0 || t.is_empty() {
        return dim_err("rodrigues_batch", format!("shape {:?} is not [J,3]", t.shape()));
    }
    let n = t.len() / 3;
    let mut out = Vec::with_capacity(9 * n);
    for j in 0..n {
        let d = &t.data()[3 * j..3 * j + 3];
        let m = rodrigues_f64([d[0] as f64, d[1] as f64, d[2] as f64]);
        out.extend(m.iter().flatten().map(|&v| v as f32));
    }
    let value = Tensor::new(&[n, 9], out)?;
    Ok(g.custom(&[axis_angles], value, Box::new(RodriguesOp)))
}
