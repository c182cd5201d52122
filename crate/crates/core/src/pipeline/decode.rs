//! The decoder shared by training, reconstruction and fitting:
//! codes → LMM poses → Motion-Comp → skinned body → Shape-Comp offsets →
//! clothed meshes.

use crate::body_model::{apply_affine, forward_kinematics_op, rodrigues_batch, BodyVars};
use crate::error::Result;
use crate::motion_model::BasisVars;
use crate::networks::{motion_comp, shape_comp};
use crate::tensorcore::{BoundParams, Graph, Tensor, Var};

use super::checkpoint::{Checkpoint, LatentTuple};

/// Checkpoint tensors placed on one graph.
pub struct Bound {
    pub params: BoundParams,
    pub body: BodyVars,
    pub basis: BasisVars,
}

impl Bound {
    pub fn new(g: &mut Graph, ck: &Checkpoint, trainable: impl Fn(&str) -> bool) -> Result<Self> {
        Ok(Self {
            params: BoundParams::bind_with(g, &ck.params, trainable),
            body: ck.model.bind(g)?,
            basis: ck.basis.bind(g)?,
        })
    }

    pub fn frozen(g: &mut Graph, ck: &Checkpoint) -> Result<Self> {
        Self::new(g, ck, |_| false)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct CodeInputs {
    pub c_s: Var,
    pub c_p: Var,
    pub c_m: Var,
    /// Auxiliary code driving Motion-Comp.
    pub c_a_motion: Var,
    /// Auxiliary code driving Shape-Comp.
    pub c_a_shape: Var,
}

impl CodeInputs {
    pub fn constants(g: &mut Graph, c: &LatentTuple) -> Self {
        let c_a = g.constant(c.c_a.clone());
        Self {
            c_s: g.constant(c.c_s.clone()),
            c_p: g.constant(c.c_p.clone()),
            c_m: g.constant(c.c_m.clone()),
            c_a_motion: c_a,
            c_a_shape: c_a,
        }
    }
}

/// Which parts of the decoder to record.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DecodeParts {
    /// Bodies posed directly by the LMM poses.
    pub linear: bool,
    pub motion_comp: bool,
    pub shape_comp: bool,
}

impl DecodeParts {
    pub const STAGE1: Self = Self { linear: true, motion_comp: false, shape_comp: false };
    pub const FULL: Self = Self { linear: false, motion_comp: true, shape_comp: true };
}

pub struct DecodedVars {
    /// `[L,P]`
    pub poses_lmm: Var,
    /// `[L,P]` after Motion-Comp (equal to `poses_lmm` when disabled).
    pub poses: Var,
    /// `[V,3]` shaped rest mesh and `[J,3]` rest joints.
    pub shaped: Var,
    pub rest_joints: Var,
    /// Per frame `[V,3]`.
    pub linear: Vec<Var>,
    pub body: Vec<Var>,
    pub offsets: Vec<Var>,
    pub clothed: Vec<Var>,
}

impl DecodedVars {
    pub fn stack(g: &mut Graph, frames: &[Var]) -> Result<Var> {
        let (l, v) = (frames.len(), g.shape(frames[0])[0]);
        let all = g.concat_rows(frames)?;
        g.reshape(all, &[l, v, 3])
    }
}

fn pose_frames(g: &mut Graph, ck: &Checkpoint, b: &Bound, shaped: Var, rest: Var, poses: Var, offsets: Option<&[Var]>) -> Result<Vec<Var>> {
    let l = g.shape(poses)[0];
    (0..l)
        .map(|t| {
            let theta = g.slice_rows(poses, t, t + 1)?;
            let canonical = match offsets {
                Some(o) => g.add(shaped, o[t])?,
                None => shaped,
            };
            ck.model.pose_vertices_var(g, &b.body, canonical, rest, theta, None)
        })
        .collect()
}

pub fn decode_graph(g: &mut Graph, ck: &Checkpoint, b: &Bound, codes: &CodeInputs, parts: DecodeParts) -> Result<DecodedVars> {
    let cfg = &ck.cfg;
    let poses_lmm = ck.basis.decode_var(g, &b.basis, codes.c_p, codes.c_m)?;
    let shaped = ck.model.shape_vertices_var(g, &b.body, codes.c_s)?;
    let rest_joints = ck.model.regress_joints_var(g, &b.body, shaped)?;
    let linear = if parts.linear { pose_frames(g, ck, b, shaped, rest_joints, poses_lmm, None)? } else { Vec::new() };
    if !parts.motion_comp && !parts.shape_comp {
        return Ok(DecodedVars {
            poses_lmm,
            poses: poses_lmm,
            shaped,
            rest_joints,
            body: linear.clone(),
            linear,
            offsets: Vec::new(),
            clothed: Vec::new(),
        });
    }
    let poses = if parts.motion_comp {
        motion_comp(g, &b.params, cfg, poses_lmm, codes.c_m, codes.c_a_motion)?
    } else {
        poses_lmm
    };
    let body = pose_frames(g, ck, b, shaped, rest_joints, poses, None)?;
    let (offsets, clothed) = if parts.shape_comp {
        let offsets = shape_comp(g, &b.params, cfg, codes.c_a_shape, poses)?;
        let clothed = pose_frames(g, ck, b, shaped, rest_joints, poses, Some(&offsets))?;
        (offsets, clothed)
    } else {
        (Vec::new(), body.clone())
    };
    Ok(DecodedVars { poses_lmm, poses, shaped, rest_joints, linear, body, offsets, clothed })
}

/// Posed joint positions `[J,3]` for frame `t` of `poses`.
pub fn posed_joints_var(g: &mut Graph, ck: &Checkpoint, rest_joints: Var, poses: Var, t: usize) -> Result<Var> {
    let theta = g.slice_rows(poses, t, t + 1)?;
    let theta = g.reshape(theta, &[ck.cfg.joints, 3])?;
    let rot = rodrigues_batch(g, theta)?;
    let trans = g.constant(Tensor::zeros(&[3]));
    let a = forward_kinematics_op(g, rot, rest_joints, trans, &ck.model.parents)?;
    apply_affine(g, a, rest_joints)
}

/// Decoded sequence with every intermediate.
#[derive(Clone, Debug, PartialEq)]
pub struct Reconstruction {
    pub codes: LatentTuple,
    pub poses_lmm: Tensor,
    pub poses: Tensor,
    pub body: Tensor,
    pub clothed: Tensor,
    pub offsets: Tensor,
    pub joints: Tensor,
}

/// Forward decode of fixed codes; `c_a_shape` defaults to `codes.c_a`.
pub fn decode_codes(ck: &Checkpoint, codes: &LatentTuple, c_a_shape: Option<&Tensor>) -> Result<Reconstruction> {
    codes.check(&ck.cfg)?;
    let mut g = Graph::new();
    let b = Bound::frozen(&mut g, ck)?;
    let mut inputs = CodeInputs::constants(&mut g, codes);
    if let Some(a) = c_a_shape {
        inputs.c_a_shape = g.constant(a.clone());
    }
    let d = decode_graph(&mut g, ck, &b, &inputs, DecodeParts::FULL)?;
    let body = DecodedVars::stack(&mut g, &d.body)?;
    let clothed = DecodedVars::stack(&mut g, &d.clothed)?;
    let offsets = DecodedVars::stack(&mut g, &d.offsets)?;
    let l = ck.cfg.seq_len;
    let joints: Vec<Var> = (0..l).map(|t| posed_joints_var(&mut g, ck, d.rest_joints, d.poses, t)).collect::<Result<_>>()?;
    let joints = DecodedVars::stack(&mut g, &joints)?;
    Ok(Reconstruction {
        codes: codes.clone(),
        poses_lmm: g.value(d.poses_lmm).clone(),
        poses: g.value(d.poses).clone(),
        body: g.value(body).clone(),
        clothed: g.value(clothed).clone(),
        offsets: g.value(offsets).clone(),
        joints: g.value(joints).clone(),
    })
}
