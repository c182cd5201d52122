//! Brute-force metric oracles, written independently of the library.

use super::jacobi_eigen;
use h4d::objectives::Mesh;
use h4d::tensorcore::Tensor;

pub type P = [f64; 3];

pub fn pt(t: &Tensor, i: usize) -> P {
    [t.data()[3 * i] as f64, t.data()[3 * i + 1] as f64, t.data()[3 * i + 2] as f64]
}
pub fn sub(a: P, b: P) -> P {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}
pub fn dot(a: P, b: P) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}
pub fn norm(a: P) -> f64 {
    dot(a, a).sqrt()
}
pub fn cross(a: P, b: P) -> P {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

pub fn brute_chamfer(a: &Tensor, b: &Tensor) -> f64 {
    let side = |x: &Tensor, y: &Tensor| {
        let (n, m) = (x.dim(0), y.dim(0));
        (0..n).map(|i| (0..m).map(|j| norm(sub(pt(x, i), pt(y, j)))).fold(f64::INFINITY, f64::min)).sum::<f64>() / n as f64
    };
    0.5 * side(a, b) + 0.5 * side(b, a)
}

pub fn segment_distance(p: P, a: P, b: P) -> f64 {
    let ab = sub(b, a);
    let t = (dot(sub(p, a), ab) / dot(ab, ab)).clamp(0.0, 1.0);
    norm(sub(p, [a[0] + t * ab[0], a[1] + t * ab[1], a[2] + t * ab[2]]))
}

/// Plane projection if it lands inside the triangle, else nearest edge.
pub fn brute_triangle_distance(p: P, t: [P; 3]) -> f64 {
    let n = cross(sub(t[1], t[0]), sub(t[2], t[0]));
    let nn = norm(n);
    let n = [n[0] / nn, n[1] / nn, n[2] / nn];
    let h = dot(sub(p, t[0]), n);
    let q = [p[0] - h * n[0], p[1] - h * n[1], p[2] - h * n[2]];
    let inside = (0..3).all(|k| dot(cross(sub(t[(k + 1) % 3], t[k]), sub(q, t[k])), n) >= 0.0);
    if inside {
        h.abs()
    } else {
        (0..3).map(|k| segment_distance(p, t[k], t[(k + 1) % 3])).fold(f64::INFINITY, f64::min)
    }
}

pub fn brute_p2s(points: &Tensor, mesh: &Mesh) -> f64 {
    let n = points.dim(0);
    (0..n)
        .map(|i| {
            mesh.faces
                .iter()
                .map(|f| brute_triangle_distance(pt(points, i), [pt(&mesh.vertices, f[0]), pt(&mesh.vertices, f[1]), pt(&mesh.vertices, f[2])]))
                .fold(f64::INFINITY, f64::min)
        })
        .sum::<f64>()
        / n as f64
}

/// Rotation via Horn's quaternion method, scale by least squares.
pub fn horn_similarity(x: &[P], y: &[P]) -> Vec<P> {
    let n = x.len() as f64;
    let mean = |v: &[P]| -> P {
        let mut m = [0.0; 3];
        for p in v {
            for k in 0..3 {
                m[k] += p[k] / n;
            }
        }
        m
    };
    let (mx, my) = (mean(x), mean(y));
    let xs: Vec<P> = x.iter().map(|p| sub(*p, mx)).collect();
    let ys: Vec<P> = y.iter().map(|p| sub(*p, my)).collect();
    let mut s = [[0.0; 3]; 3];
    for (a, b) in xs.iter().zip(&ys) {
        for i in 0..3 {
            for j in 0..3 {
                s[i][j] += a[i] * b[j];
            }
        }
    }
    let (sxx, sxy, sxz, syx, syy, syz, szx, szy, szz) = (s[0][0], s[0][1], s[0][2], s[1][0], s[1][1], s[1][2], s[2][0], s[2][1], s[2][2]);
    let nmat = [
        sxx + syy + szz, syz - szy, szx - sxz, sxy - syx,
        syz - szy, sxx - syy - szz, sxy + syx, szx + sxz,
        szx - sxz, sxy + syx, -sxx + syy - szz, syz + szy,
        sxy - syx, szx + sxz, syz + szy, -sxx - syy + szz,
    ];
    let (_, vecs) = jacobi_eigen(&nmat, 4);
    let q: Vec<f64> = (0..4).map(|r| vecs[r * 4]).collect();
    let (w, a, b, c) = (q[0], q[1], q[2], q[3]);
    let r = [
        [w * w + a * a - b * b - c * c, 2.0 * (a * b - w * c), 2.0 * (a * c + w * b)],
        [2.0 * (a * b + w * c), w * w - a * a + b * b - c * c, 2.0 * (b * c - w * a)],
        [2.0 * (a * c - w * b), 2.0 * (b * c + w * a), w * w - a * a - b * b + c * c],
    ];
    let rot = |p: P| -> P { [dot(r[0], p), dot(r[1], p), dot(r[2], p)] };
    let num: f64 = xs.iter().zip(&ys).map(|(a, b)| dot(rot(*a), *b)).sum();
    let den: f64 = xs.iter().map(|a| dot(*a, *a)).sum();
    let sc = num / den;
    xs.iter().map(|a| {
        let q = rot(*a);
        [sc * q[0] + my[0], sc * q[1] + my[1], sc * q[2] + my[2]]
    }).collect()
}

pub fn brute_mpjpe(pred: &Tensor, gt: &Tensor) -> (f64, f64, f64) {
    let (l, j) = (pred.dim(0), pred.dim(1));
    let (mut m, mut pa) = (0.0, 0.0);
    for f in 0..l {
        let p: Vec<P> = (0..j).map(|i| pt(pred, f * j + i)).collect();
        let g: Vec<P> = (0..j).map(|i| pt(gt, f * j + i)).collect();
        m += p.iter().zip(&g).map(|(a, b)| norm(sub(*a, *b))).sum::<f64>() / j as f64;
        let al = horn_similarity(&p, &g);
        pa += al.iter().zip(&g).map(|(a, b)| norm(sub(*a, *b))).sum::<f64>() / j as f64;
    }
    let mut acc = 0.0;
    for f in 1..l - 1 {
        for i in 0..j {
            let sd = |t: &Tensor| {
                let (a, b, c) = (pt(t, (f - 1) * j + i), pt(t, f * j + i), pt(t, (f + 1) * j + i));
                [a[0] - 2.0 * b[0] + c[0], a[1] - 2.0 * b[1] + c[1], a[2] - 2.0 * b[2] + c[2]]
            };
            acc += norm(sub(sd(pred), sd(gt)));
        }
    }
    (m / l as f64, pa / l as f64, acc / ((l - 2) * j) as f64)
}
