//! Procedural stand-in for a licensed body model: closed tubes along every
//! bone, distance-based skinning weights and a small random shape space.

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensorcore::init::rng_for;
use crate::tensorcore::Tensor;

use super::model::BodyModel;

const SMPL_PARENTS: [i32; 24] = [
    -1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21,
];

// y-up, pelvis at the origin, meters.
const SMPL_REST: [[f64; 3]; 24] = [
    [0.0, 0.0, 0.0],
    [0.09, -0.08, 0.0],
    [-0.09, -0.08, 0.0],
    [0.0, 0.11, -0.01],
    [0.10, -0.48, 0.01],
    [-0.10, -0.48, 0.01],
    [0.0, 0.24, 0.0],
    [0.10, -0.88, -0.02],
    [-0.10, -0.88, -0.02],
    [0.0, 0.30, 0.01],
    [0.10, -0.93, 0.11],
    [-0.10, -0.93, 0.11],
    [0.0, 0.50, -0.01],
    [0.07, 0.42, 0.0],
    [-0.07, 0.42, 0.0],
    [0.0, 0.62, 0.03],
    [0.18, 0.44, -0.01],
    [-0.18, 0.44, -0.01],
    [0.44, 0.44, -0.02],
    [-0.44, 0.44, -0.02],
    [0.68, 0.44, 0.0],
    [-0.68, 0.44, 0.0],
    [0.77, 0.44, 0.0],
    [-0.77, 0.44, 0.0],
];

fn smpl_radius(child: usize) -> f64 {
    match child {
        1 | 2 => 0.08,
        3 | 6 | 9 => 0.11,
        4 | 5 => 0.07,
        7 | 8 => 0.05,
        10 | 11 => 0.04,
        12 => 0.05,
        13 | 14 => 0.05,
        15 => 0.09,
        16 | 17 => 0.05,
        18 | 19 => 0.045,
        20 | 21 => 0.04,
        _ => 0.035,
    }
}

const SKIN_SIGMA: f64 = 0.05;
const SKIN_CUTOFF: f64 = 1e-3;

type V3 = [f64; 3];

fn sub(a: V3, b: V3) -> V3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn add_scaled(a: V3, b: V3, s: f64) -> V3 {
    [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]]
}

fn dot(a: V3, b: V3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: V3, b: V3) -> V3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn norm(a: V3) -> f64 {
    dot(a, a).sqrt()
}

fn normalize(a: V3) -> V3 {
    let n = norm(a);
    if n < 1e-12 {
        [0.0; 3]
    } else {
        [a[0] / n, a[1] / n, a[2] / n]
    }
}

fn point_segment_distance(x: V3, a: V3, b: V3) -> f64 {
    let ab = sub(b, a);
    let l2 = dot(ab, ab);
    let t = if l2 > 0.0 { (dot(sub(x, a), ab) / l2).clamp(0.0, 1.0) } else { 0.0 };
    norm(sub(x, add_scaled(a, ab, t)))
}

fn skeleton(joints: usize) -> (Vec<Option<usize>>, Vec<V3>, Vec<f64>) {
    if joints == 24 {
        let parents = SMPL_PARENTS.iter().map(|&p| usize::try_from(p).ok()).collect();
        let radii = (0..24).map(smpl_radius).collect();
        return (parents, SMPL_REST.to_vec(), radii);
    }
    // Three chains leaving the root: up, down-left, down-right.
    let dirs = [normalize([0.0, 1.0, 0.0]), normalize([0.5, -1.0, 0.0]), normalize([-0.5, -1.0, 0.0])];
    let mut parents = vec![None];
    let mut rest = vec![[0.0; 3]];
    for i in 1..joints {
        let chain = (i - 1) % 3;
        let depth = (i - 1) / 3 + 1;
        parents.push(Some(if depth == 1 { 0 } else { i - 3 }));
        rest.push([0.0, 0.0, 0.0]);
        rest[i] = add_scaled([0.0; 3], dirs[chain], 0.25 * depth as f64);
    }
    (parents, rest, vec![0.05; joints])
}

/// One ring (or cap apex) of a bone tube: member vertex indices and center.
struct Ring {
    verts: Vec<usize>,
    center: V3,
}

/// Deterministic procedural humanoid with `joints` joints and exactly `verts`
/// vertices. Every bone gets its own closed tube, so the mesh is a union of
/// watertight, outward-oriented components.
pub fn make_toy_model(joints: usize, verts: usize, shape_dims: usize, seed: u64) -> Result<BodyModel> {
    let bones = joints.saturating_sub(1);
    if joints < 2 || verts < 5 * bones {
        return Err(Error::InvalidArgument(format!(
            "toy model needs J >= 2 and V >= 5(J-1), got J={joints}, V={verts}"
        )));
    }
    let (parents, rest, radius) = skeleton(joints);

    let mut positions: Vec<V3> = Vec::with_capacity(verts);
    let mut faces: Vec<[usize; 3]> = Vec::new();
    let mut rings: Vec<Ring> = Vec::new();
    // Per vertex: anchor point on the bone axis (for skinning and radial shape
    // directions) and the bone it belongs to.
    let mut anchor: Vec<V3> = Vec::with_capacity(verts);
    let mut bone_of: Vec<usize> = Vec::with_capacity(verts);

    let base = verts / bones;
    let extra = verts % bones;
    for b in 0..bones {
        let c = b + 1;
        let p = parents[c].expect("non-root joint has a parent");
        let n = base + usize::from(b < extra);
        let m = n - 2;
        let sides = [6, 8, 5, 7, 4, 3].into_iter().find(|s| m % s == 0).unwrap_or(m);
        let nrings = m / sides;

        let (a, e) = (rest[p], rest[c]);
        let axis = normalize(sub(e, a));
        let helper = if axis[1].abs() < 0.9 { [0.0, 1.0, 0.0] } else { [1.0, 0.0, 0.0] };
        let e1 = normalize(cross(helper, axis));
        let e2 = cross(axis, e1);
        let r = radius[c];
        let len = norm(sub(e, a));

        let start = positions.len();
        for k in 0..nrings {
            let t = if nrings == 1 { 0.5 } else { k as f64 / (nrings - 1) as f64 };
            let center = add_scaled(a, axis, t * len);
            let mut ring = Ring { verts: Vec::with_capacity(sides), center };
            for s in 0..sides {
                let phi = 2.0 * std::f64::consts::PI * s as f64 / sides as f64;
                let v = add_scaled(add_scaled(center, e1, r * phi.cos()), e2, r * phi.sin());
                ring.verts.push(positions.len());
                positions.push(v);
                anchor.push(center);
                bone_of.push(b);
            }
            rings.push(ring);
        }
        let bottom = positions.len();
        positions.push(add_scaled(a, axis, -0.5 * r));
        anchor.push(a);
        bone_of.push(b);
        rings.push(Ring { verts: vec![bottom], center: positions[bottom] });
        let top = positions.len();
        positions.push(add_scaled(e, axis, 0.5 * r));
        anchor.push(e);
        bone_of.push(b);
        rings.push(Ring { verts: vec![top], center: positions[top] });

        let idx = |k: usize, s: usize| start + k * sides + (s % sides);
        for k in 0..nrings - 1 {
            for s in 0..sides {
                let (q0, q1, q2, q3) = (idx(k, s), idx(k, s + 1), idx(k + 1, s + 1), idx(k + 1, s));
                faces.push([q0, q1, q2]);
                faces.push([q0, q2, q3]);
            }
        }
        for s in 0..sides {
            faces.push([bottom, idx(0, s + 1), idx(0, s)]);
            faces.push([top, idx(nrings - 1, s), idx(nrings - 1, s + 1)]);
        }
    }
    debug_assert_eq!(positions.len(), verts);

    // Joint regressor: uniform over the nearest ring(s) to each joint.
    let mut regressor = vec![0.0f32; joints * verts];
    for j in 0..joints {
        let dists: Vec<f64> = rings.iter().map(|r| norm(sub(r.center, rest[j]))).collect();
        let best = dists.iter().cloned().fold(f64::INFINITY, f64::min);
        let chosen: Vec<usize> = rings
            .iter()
            .zip(&dists)
            .filter(|(_, &d)| d <= best + 1e-9)
            .flat_map(|(r, _)| r.verts.iter().copied())
            .collect();
        let w = 1.0 / chosen.len() as f64;
        for v in chosen {
            regressor[j * verts + v] += w as f32;
        }
    }

    // Skinning: Gaussian falloff from the vertex's axis anchor to each joint's
    // influence segments (joint → each child; a leaf influences its point).
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); joints];
    for (c, p) in parents.iter().enumerate() {
        if let Some(p) = p {
            children[*p].push(c);
        }
    }
    let mut skin = vec![0.0f32; verts * joints];
    for v in 0..verts {
        let x = anchor[v];
        let mut w: Vec<f64> = (0..joints)
            .map(|j| {
                let d = if children[j].is_empty() {
                    norm(sub(x, rest[j]))
                } else {
                    children[j]
                        .iter()
                        .map(|&c| point_segment_distance(x, rest[j], rest[c]))
                        .fold(f64::INFINITY, f64::min)
                };
                (-d * d / (2.0 * SKIN_SIGMA * SKIN_SIGMA)).exp()
            })
            .collect();
        // The owning bone's parent joint always keeps some weight, so no row
        // can be truncated to nothing.
        let owner = parents[bone_of[v] + 1].expect("bone parent");
        let total: f64 = w.iter().sum();
        for (j, wj) in w.iter_mut().enumerate() {
            *wj /= total;
            if *wj < SKIN_CUTOFF && j != owner {
                *wj = 0.0;
            }
        }
        let total: f64 = w.iter().sum();
        for j in 0..joints {
            skin[v * joints + j] = (w[j] / total) as f32;
        }
    }

    // Shape space: a global scale about the pelvis, then per-bone radial
    // thickness modes, each a centimeter or two per unit coefficient.
    let mut rng = rng_for(seed, "toy.shape_basis");
    let mut basis = vec![0.0f32; verts * 3 * shape_dims];
    let coeffs: Vec<Vec<f64>> = (1..shape_dims.max(1))
        .map(|_| (0..bones).map(|_| rng.random_range(-0.015..0.015)).collect())
        .collect();
    for v in 0..verts {
        let radial = normalize(sub(positions[v], anchor[v]));
        for s in 0..shape_dims {
            let d = if s == 0 {
                [0.02 * positions[v][0], 0.02 * positions[v][1], 0.02 * positions[v][2]]
            } else {
                let k = coeffs[s - 1][bone_of[v]];
                [k * radial[0], k * radial[1], k * radial[2]]
            };
            for a in 0..3 {
                basis[(v * 3 + a) * shape_dims + s] = d[a] as f32;
            }
        }
    }

    let template: Vec<f32> = positions.iter().flat_map(|p| p.iter().map(|&x| x as f32)).collect();
    let model = BodyModel {
        template: Tensor::new(&[verts, 3], template)?,
        shape_basis: Tensor::new(&[verts, 3, shape_dims], basis)?,
        joint_regressor: Tensor::new(&[joints, verts], regressor)?,
        skin_weights: Tensor::new(&[verts, joints], skin)?,
        parents,
        faces,
    };
    model.validate()?;
    Ok(model)
}
