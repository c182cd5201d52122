use nalgebra::{Matrix3, Vector3};

use crate::error::{dim_err, Error, Result};
use crate::tensorcore::Tensor;

use super::geometry::{point, Mesh, PointGrid, TriangleBvh};

fn check_cloud(op: &'static str, t: &Tensor) -> Result<usize> {
    if t.rank() != 2 || t.dim(1) != 3 {
        return dim_err(op, format!("expected [N,3], got {:?}", t.shape()));
    }
    if t.dim(0) == 0 {
        return Err(Error::InvalidArgument(format!("{op}: empty point set")));
    }
    Ok(t.dim(0))
}

fn mean_nn_distance(from: &Tensor, to: &Tensor) -> f64 {
    let grid = PointGrid::new(to);
    let n = from.dim(0);
    (0..n).map(|i| grid.nearest(point(from, i)).expect("nonempty").1.sqrt()).sum::<f64>() / n as f64
}

/// `½·mean_a min_b ‖a−b‖ + ½·mean_b min_a ‖a−b‖`.
pub fn chamfer(a: &Tensor, b: &Tensor) -> Result<f64> {
    check_cloud("chamfer", a)?;
    check_cloud("chamfer", b)?;
    Ok(0.5 * mean_nn_distance(a, b) + 0.5 * mean_nn_distance(b, a))
}

/// Mean exact point-to-triangle distance from `points` to `mesh`.
pub fn point_to_surface(points: &Tensor, mesh: &Mesh) -> Result<f64> {
    let n = check_cloud("point_to_surface", points)?;
    if mesh.faces.is_empty() {
        return Err(Error::InvalidArgument("point_to_surface: mesh has no faces".into()));
    }
    let bvh = TriangleBvh::new(mesh);
    Ok((0..n).map(|i| bvh.closest(point(points, i)).expect("faces").dist2.sqrt()).sum::<f64>() / n as f64)
}

fn frames_joints(op: &'static str, a: &Tensor, b: &Tensor) -> Result<(usize, usize)> {
    if a.shape() != b.shape() || a.rank() != 3 || a.dim(2) != 3 {
        return dim_err(op, format!("{:?} vs {:?}", a.shape(), b.shape()));
    }
    Ok((a.dim(0), a.dim(1)))
}

/// Mean Euclidean per-vertex error over frames and vertices. Accepts `[V,3]`
/// or `[L,V,3]`.
pub fn pve(pred: &Tensor, gt: &Tensor) -> Result<f64> {
    if pred.shape() != gt.shape() || pred.shape().last() != Some(&3) || pred.is_empty() {
        return dim_err("pve", format!("{:?} vs {:?}", pred.shape(), gt.shape()));
    }
    let n = pred.len() / 3;
    Ok((0..n).map(|i| dist(point(pred, i), point(gt, i))).sum::<f64>() / n as f64)
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Joint-position errors in the input's length unit; `accel` is per frame²
/// and `None` for sequences shorter than three frames.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JointErrors {
    pub mpjpe: f64,
    pub pa_mpjpe: f64,
    pub accel: Option<f64>,
}

/// Similarity transform `(s, R, t)` minimizing `Σ‖s·R·x + t − y‖²`.
pub fn similarity_align(x: &[[f64; 3]], y: &[[f64; 3]]) -> (f64, Matrix3<f64>, Vector3<f64>) {
    let n = x.len() as f64;
    let to_v = |p: &[f64; 3]| Vector3::new(p[0], p[1], p[2]);
    let mx = x.iter().map(to_v).sum::<Vector3<f64>>() / n;
    let my = y.iter().map(to_v).sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    let mut var_x = 0.0;
    for (p, q) in x.iter().zip(y) {
        let (dx, dy) = (to_v(p) - mx, to_v(q) - my);
        cov += dy * dx.transpose();
        var_x += dx.norm_squared();
    }
    cov /= n;
    var_x /= n;
    let svd = cov.svd(true, true);
    let (u, vt) = (svd.u.expect("u"), svd.v_t.expect("v_t"));
    let mut s = Matrix3::identity();
    if u.determinant() * vt.determinant() < 0.0 {
        s[(2, 2)] = -1.0;
    }
    let r = u * s * vt;
    let scale = if var_x > 0.0 { (svd.singular_values.component_mul(&s.diagonal())).sum() / var_x } else { 0.0 };
    let t = my - scale * r * mx;
    (scale, r, t)
}

/// MPJPE, Procrustes-aligned MPJPE and acceleration error for `[L,J,3]`.
pub fn mpjpe_family(pred: &Tensor, gt: &Tensor) -> Result<JointErrors> {
    let (l, j) = frames_joints("mpjpe", pred, gt)?;
    if l == 0 || j == 0 {
        return dim_err("mpjpe", "empty joint set");
    }
    let frame = |t: &Tensor, f: usize| -> Vec<[f64; 3]> { (0..j).map(|i| point(t, f * j + i)).collect() };
    let mut mpjpe = 0.0;
    let mut pa = 0.0;
    for f in 0..l {
        let (p, g) = (frame(pred, f), frame(gt, f));
        mpjpe += p.iter().zip(&g).map(|(a, b)| dist(*a, *b)).sum::<f64>() / j as f64;
        let (s, r, t) = similarity_align(&p, &g);
        pa += p
            .iter()
            .zip(&g)
            .map(|(a, b)| {
                let q = s * r * Vector3::new(a[0], a[1], a[2]) + t;
                dist([q[0], q[1], q[2]], *b)
            })
            .sum::<f64>()
            / j as f64;
    }
    let accel = (l >= 3).then(|| {
        let mut acc = 0.0;
        for f in 1..l - 1 {
            for i in 0..j {
                let second = |t: &Tensor| -> [f64; 3] {
                    let (a, b, c) = (point(t, (f - 1) * j + i), point(t, f * j + i), point(t, (f + 1) * j + i));
                    [a[0] - 2.0 * b[0] + c[0], a[1] - 2.0 * b[1] + c[1], a[2] - 2.0 * b[2] + c[2]]
                };
                acc += dist(second(pred), second(gt));
            }
        }
        acc / ((l - 2) * j) as f64
    });
    Ok(JointErrors { mpjpe: mpjpe / l as f64, pa_mpjpe: pa / l as f64, accel })
}

/// Volumetric IoU with a flag for non-watertight inputs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IouResult {
    pub iou: f64,
    pub watertight: bool,
}

/// Occupancy of voxel centers over the padded union box. Inside-ness is the
/// nonzero rule on signed ray crossings along +x, which equals crossing
/// parity for a simple closed surface and also handles unions of
/// overlapping closed parts (like per-bone tubes).
pub fn volumetric_iou(a: &Mesh, b: &Mesh, resolution: usize) -> Result<IouResult> {
    if resolution == 0 {
        return Err(Error::InvalidArgument("resolution must be positive".into()));
    }
    let watertight = a.is_watertight() && b.is_watertight();
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for m in [a, b] {
        for i in 0..m.vertices.dim(0) {
            let p = m.vertex(i);
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
    }
    if !lo.iter().chain(&hi).all(|v| v.is_finite()) {
        return Err(Error::InvalidArgument("volumetric_iou: empty meshes".into()));
    }
    let ext = (0..3).map(|k| hi[k] - lo[k]).fold(0.0, f64::max).max(1e-9);
    for k in 0..3 {
        lo[k] -= 0.05 * ext;
        hi[k] += 0.05 * ext;
    }
    let step: Vec<f64> = (0..3).map(|k| (hi[k] - lo[k]) / resolution as f64).collect();
    let occ_a = occupancy(a, &lo, &step, resolution);
    let occ_b = occupancy(b, &lo, &step, resolution);
    let (mut inter, mut union) = (0usize, 0usize);
    for (x, y) in occ_a.iter().zip(&occ_b) {
        inter += usize::from(*x && *y);
        union += usize::from(*x || *y);
    }
    let iou = if union == 0 { 0.0 } else { inter as f64 / union as f64 };
    Ok(IouResult { iou, watertight })
}

// Keeps rays off mesh edges and vertices that sit on grid-aligned values.
const JITTER: [f64; 2] = [std::f64::consts::SQRT_2 * 1e-7, std::f64::consts::E * 1e-7];

fn occupancy(mesh: &Mesh, lo: &[f64; 3], step: &[f64], res: usize) -> Vec<bool> {
    // Crossings (x, sign) per (y,z) column.
    let mut cols: Vec<Vec<(f64, i32)>> = vec![Vec::new(); res * res];
    let ray = |j: usize, k: usize| -> (f64, f64) {
        (
            lo[1] + (j as f64 + 0.5) * step[1] + JITTER[0] * step[1],
            lo[2] + (k as f64 + 0.5) * step[2] + JITTER[1] * step[2],
        )
    };
    for f in 0..mesh.faces.len() {
        let t = mesh.triangle(f);
        let (ymin, ymax) = (t.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min), t.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max));
        let (zmin, zmax) = (t.iter().map(|p| p[2]).fold(f64::INFINITY, f64::min), t.iter().map(|p| p[2]).fold(f64::NEG_INFINITY, f64::max));
        let j0 = (((ymin - lo[1]) / step[1]) - 1.0).floor().max(0.0) as usize;
        let j1 = ((((ymax - lo[1]) / step[1]) + 1.0).ceil().max(0.0) as usize).min(res - 1);
        let k0 = (((zmin - lo[2]) / step[2]) - 1.0).floor().max(0.0) as usize;
        let k1 = ((((zmax - lo[2]) / step[2]) + 1.0).ceil().max(0.0) as usize).min(res - 1);
        // Signed area of the (y,z) projection: orientation of the crossing.
        let area = (t[1][1] - t[0][1]) * (t[2][2] - t[0][2]) - (t[2][1] - t[0][1]) * (t[1][2] - t[0][2]);
        if area == 0.0 {
            continue;
        }
        for j in j0..=j1 {
            for k in k0..=k1 {
                let (y, z) = ray(j, k);
                let e = |p: &[f64; 3], q: &[f64; 3]| (q[1] - p[1]) * (z - p[2]) - (q[2] - p[2]) * (y - p[1]);
                let (w0, w1, w2) = (e(&t[1], &t[2]), e(&t[2], &t[0]), e(&t[0], &t[1]));
                let inside = if area > 0.0 { w0 >= 0.0 && w1 >= 0.0 && w2 >= 0.0 } else { w0 <= 0.0 && w1 <= 0.0 && w2 <= 0.0 };
                if !inside {
                    continue;
                }
                let x = (w0 * t[0][0] + w1 * t[1][0] + w2 * t[2][0]) / area;
                cols[j * res + k].push((x, if area > 0.0 { 1 } else { -1 }));
            }
        }
    }
    let mut occ = vec![false; res * res * res];
    for j in 0..res {
        for k in 0..res {
            let c = &mut cols[j * res + k];
            if c.is_empty() {
                continue;
            }
            c.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut wind = 0;
            let mut next = 0;
            for i in 0..res {
                let x = lo[0] + (i as f64 + 0.5) * step[0];
                while next < c.len() && c[next].0 < x {
                    wind += c[next].1;
                    next += 1;
                }
                occ[(i * res + j) * res + k] = wind != 0;
            }
        }
    }
    occ
}

/// Evaluation summary. Lengths are millimeters when the inputs are meters;
/// chamfer stays in input units.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricReport {
    pub mpjpe: f64,
    pub pa_mpjpe: f64,
    pub pve: f64,
    /// mm/frame²
    pub accel_err: Option<f64>,
    /// mm/s², when a frame rate is known.
    pub accel_err_per_s2: Option<f64>,
    pub chamfer: Option<f64>,
    pub iou: Option<f64>,
    pub watertight: Option<bool>,
}

impl MetricReport {
    pub fn from_joints(j: &JointErrors, pve_m: f64, fps: Option<f64>) -> Self {
        let accel = j.accel.map(|a| a * 1e3);
        Self {
            mpjpe: j.mpjpe * 1e3,
            pa_mpjpe: j.pa_mpjpe * 1e3,
            pve: pve_m * 1e3,
            accel_err: accel,
            accel_err_per_s2: accel.zip(fps).map(|(a, f)| a * f * f),
            ..Default::default()
        }
    }

    /// Line-delimited `key=value` records.
    pub fn to_kv(&self) -> String {
        let mut lines = vec![
            format!("mpjpe_mm={:.6}", self.mpjpe),
            format!("pa_mpjpe_mm={:.6}", self.pa_mpjpe),
            format!("pve_mm={:.6}", self.pve),
        ];
        if let Some(a) = self.accel_err {
            lines.push(format!("accel_mm_per_frame2={a:.6}"));
        }
        if let Some(a) = self.accel_err_per_s2 {
            lines.push(format!("accel_mm_per_s2={a:.6}"));
        }
        if let Some(c) = self.chamfer {
            lines.push(format!("chamfer={c:.6}"));
        }
        if let Some(i) = self.iou {
            lines.push(format!("iou={i:.6}"));
        }
        if let Some(w) = self.watertight {
            lines.push(format!("watertight={w}"));
        }
        lines.join("\n") + "\n"
    }

    /// Human-readable table.
    pub fn to_table(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.3}"));
        let mut s = String::new();
        s.push_str(&format!("{:<22}{:>12}\n", "metric", "value"));
        s.push_str(&format!("{:<22}{:>12.3}\n", "MPJPE (mm)", self.mpjpe));
        s.push_str(&format!("{:<22}{:>12.3}\n", "PA-MPJPE (mm)", self.pa_mpjpe));
        s.push_str(&format!("{:<22}{:>12.3}\n", "PVE (mm)", self.pve));
        s.push_str(&format!("{:<22}{:>12}\n", "Accel (mm/frame^2)", opt(self.accel_err)));
        s.push_str(&format!("{:<22}{:>12}\n", "Accel (mm/s^2)", opt(self.accel_err_per_s2)));
        s.push_str(&format!("{:<22}{:>12}\n", "Chamfer", opt(self.chamfer)));
        s.push_str(&format!("{:<22}{:>12}\n", "IoU", opt(self.iou)));
        s
    }
}
