use crate::error::{dim_err, Error, Result};
use crate::tensorcore::{Graph, Tensor, Var};

use super::kinematics::{apply_affine, forward_kinematics_op, global_transforms, validate_parents};
use super::rotation::rodrigues_batch;

/// Skinned parametric body: template, linear shape space, joint regressor,
/// skinning weights and kinematic tree.
#[derive(Clone, Debug, PartialEq)]
pub struct BodyModel {
    /// `[V,3]` rest-pose vertices in meters.
    pub template: Tensor,
    /// `[V,3,S]`
    pub shape_basis: Tensor,
    /// `[J,V]`
    pub joint_regressor: Tensor,
    /// `[V,J]`
    pub skin_weights: Tensor,
    pub parents: Vec<Option<usize>>,
    pub faces: Vec<[usize; 3]>,
}

/// Axis-angle per joint plus root translation.
#[derive(Clone, Debug, PartialEq)]
pub struct Pose {
    /// `[J,3]` radians; joint 0 carries the global orientation.
    pub theta: Tensor,
    /// `[3]` meters.
    pub translation: Tensor,
}

impl Pose {
    pub fn zero(joints: usize) -> Self {
        Self {
            theta: Tensor::zeros(&[joints, 3]),
            translation: Tensor::zeros(&[3]),
        }
    }

    /// From a flat `[3J]` (or `[J,3]`) pose vector with zero translation.
    pub fn from_flat(theta: &Tensor) -> Result<Self> {
        if theta.len() % 3 != 0 {
            return dim_err("Pose::from_flat", format!("{:?}", theta.shape()));
        }
        Ok(Self {
            theta: theta.clone().reshape(&[theta.len() / 3, 3])?,
            translation: Tensor::zeros(&[3]),
        })
    }
}

/// Model tensors placed on a graph as constants.
#[derive(Clone, Copy, Debug)]
pub struct BodyVars {
    pub template: Var,
    /// `[3V, S]`
    pub basis: Var,
    pub regressor: Var,
    pub weights: Var,
}

impl BodyModel {
    pub fn num_vertices(&self) -> usize {
        self.template.dim(0)
    }

    pub fn num_joints(&self) -> usize {
        self.parents.len()
    }

    pub fn shape_dims(&self) -> usize {
        self.shape_basis.dim(2)
    }

    pub fn pose_dims(&self) -> usize {
        3 * self.num_joints()
    }

    /// Check every structural invariant of the model.
    pub fn validate(&self) -> Result<()> {
        validate_parents(&self.parents)?;
        let v = self.template.dim(0);
        let j = self.parents.len();
        if self.template.shape() != [v, 3] {
            return dim_err("BodyModel", format!("template {:?}", self.template.shape()));
        }
        if self.shape_basis.rank() != 3 || self.shape_basis.dim(0) != v || self.shape_basis.dim(1) != 3 {
            return dim_err("BodyModel", format!("shape_basis {:?}", self.shape_basis.shape()));
        }
        if self.joint_regressor.shape() != [j, v] {
            return dim_err("BodyModel", format!("joint_regressor {:?}", self.joint_regressor.shape()));
        }
        if self.skin_weights.shape() != [v, j] {
            return dim_err("BodyModel", format!("skin_weights {:?}", self.skin_weights.shape()));
        }
        for r in 0..v {
            let row = self.skin_weights.row(r);
            if row.iter().any(|&w| w < 0.0) {
                return Err(Error::InvalidArgument(format!("negative skin weight at vertex {r}")));
            }
            let s: f64 = row.iter().map(|&w| w as f64).sum();
            if (s - 1.0).abs() > 1e-5 {
                return Err(Error::InvalidArgument(format!("skin weights of vertex {r} sum to {s}")));
            }
        }
        for r in 0..j {
            let s: f64 = self.joint_regressor.row(r).iter().map(|&w| w as f64).sum();
            if (s - 1.0).abs() > 1e-5 {
                return Err(Error::InvalidArgument(format!("regressor row {r} sums to {s}")));
            }
        }
        for f in &self.faces {
            if f.iter().any(|&i| i >= v) {
                return Err(Error::InvalidArgument(format!("face {:?} out of range", f)));
            }
        }
        Ok(())
    }

    pub fn bind(&self, g: &mut Graph) -> Result<BodyVars> {
        let v = self.num_vertices();
        let s = self.shape_dims();
        Ok(BodyVars {
            template: g.constant(self.template.clone()),
            basis: g.constant(self.shape_basis.clone().reshape(&[3 * v, s])?),
            regressor: g.constant(self.joint_regressor.clone()),
            weights: g.constant(self.skin_weights.clone()),
        })
    }

    /// `template + shape_basis·beta` on the graph.
    pub fn shape_vertices_var(&self, g: &mut Graph, bv: &BodyVars, beta: Var) -> Result<Var> {
        let s = self.shape_dims();
        if g.value(beta).len() != s {
            return dim_err("shape_vertices", format!("beta {:?} vs {} shape dims", g.shape(beta), s));
        }
        let b = g.reshape(beta, &[s, 1])?;
        let disp = g.matmul(bv.basis, b)?;
        let disp = g.reshape(disp, &[self.num_vertices(), 3])?;
        g.add(bv.template, disp)
    }

    /// `joint_regressor · vertices` on the graph.
    pub fn regress_joints_var(&self, g: &mut Graph, bv: &BodyVars, vertices: Var) -> Result<Var> {
        g.matmul(bv.regressor, vertices)
    }

    /// Pose a canonical mesh. `shaped` `[V,3]` already includes shape blend and
    /// any canonical offsets; `rest_joints` come from the shaped body without
    /// offsets. `theta` is `[J,3]` or `[3J]`.
    pub fn pose_vertices_var(
        &self,
        g: &mut Graph,
        bv: &BodyVars,
        shaped: Var,
        rest_joints: Var,
        theta: Var,
        translation: Option<Var>,
    ) -> Result<Var> {
        let j = self.num_joints();
        if g.value(theta).len() != 3 * j {
            return dim_err("skin_lbs", format!("pose {:?} for {} joints", g.shape(theta), j));
        }
        let trans = match translation {
            Some(t) => t,
            None => g.constant(Tensor::zeros(&[3])),
        };
        let rot = rodrigues_batch(g, theta)?;
        let a = forward_kinematics_op(g, rot, rest_joints, trans, &self.parents)?;
        // Blend (A_j - [I|0]) and add back the point: exact at the rest pose
        // even though the weight rows only sum to one within rounding.
        let ident = g.constant(identity_affines(j));
        let delta = g.sub(a, ident)?;
        let per_vertex = g.matmul(bv.weights, delta)?;
        let moved = apply_affine(g, per_vertex, shaped)?;
        g.add(shaped, moved)
    }

    /// Full decoder on the graph: shape blend, optional canonical offsets,
    /// joint regression and skinning.
    pub fn skin_var(
        &self,
        g: &mut Graph,
        bv: &BodyVars,
        beta: Var,
        theta: Var,
        translation: Option<Var>,
        offsets: Option<Var>,
    ) -> Result<Var> {
        let shaped = self.shape_vertices_var(g, bv, beta)?;
        let rest_joints = self.regress_joints_var(g, bv, shaped)?;
        let canonical = match offsets {
            Some(o) => g.add(shaped, o)?,
            None => shaped,
        };
        self.pose_vertices_var(g, bv, canonical, rest_joints, theta, translation)
    }

    pub fn shape_vertices(&self, beta: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let bv = self.bind(&mut g)?;
        let b = g.constant(beta.clone());
        let out = self.shape_vertices_var(&mut g, &bv, b)?;
        Ok(g.value(out).clone())
    }

    pub fn regress_joints(&self, vertices: &Tensor) -> Result<Tensor> {
        if vertices.shape() != [self.num_vertices(), 3] {
            return dim_err("regress_joints", format!("vertices {:?}", vertices.shape()));
        }
        self.joint_regressor.matmul(vertices)
    }

    /// Posed vertices `[V,3]`.
    pub fn skin_lbs(&self, beta: &Tensor, pose: &Pose, offsets: Option<&Tensor>) -> Result<Tensor> {
        let mut g = Graph::new();
        let bv = self.bind(&mut g)?;
        let b = g.constant(beta.clone());
        let th = g.constant(pose.theta.clone());
        let tr = g.constant(pose.translation.clone());
        let off = match offsets {
            Some(o) => {
                if o.shape() != [self.num_vertices(), 3] {
                    return dim_err("skin_lbs", format!("offsets {:?}", o.shape()));
                }
                Some(g.constant(o.clone()))
            }
            None => None,
        };
        let out = self.skin_var(&mut g, &bv, b, th, Some(tr), off)?;
        Ok(g.value(out).clone())
    }

    /// Global joint transforms `[J,4,4]` for a pose, with rest joints taken
    /// from the shaped template.
    pub fn forward_kinematics(&self, beta: &Tensor, pose: &Pose) -> Result<Tensor> {
        let rest = self.regress_joints(&self.shape_vertices(beta)?)?;
        forward_kinematics(pose, &rest, &self.parents)
    }
}

/// Global transforms `[J,4,4]` of every joint.
pub fn forward_kinematics(pose: &Pose, rest_joints: &Tensor, parents: &[Option<usize>]) -> Result<Tensor> {
    let mut g = Graph::new();
    let th = g.constant(pose.theta.clone());
    let rot = rodrigues_batch(&mut g, th)?;
    global_transforms(g.value(rot), rest_joints, &pose.translation, parents)
}

fn identity_affines(j: usize) -> Tensor {
    let mut t = Tensor::zeros(&[j, 12]);
    for r in 0..j {
        let d = &mut t.data_mut()[12 * r..12 * r + 12];
        d[0] = 1.0;
        d[5] = 1.0;
        d[10] = 1.0;
    }
    t
}
