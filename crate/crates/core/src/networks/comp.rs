//! Compensation networks: per-frame pose residuals and canonical per-vertex
//! offsets, both zero at initialization.

use crate::body_model::rodrigues_batch;
use crate::error::{dim_err, Result};
use crate::tensorcore::gru::{init_stack, stacked_gru};
use crate::tensorcore::init::{rng_for, uniform};
use crate::tensorcore::{BoundParams, GateVars, Graph, ParamSet, Var};

use super::config::NetConfig;
use super::layers::{as_row, dense, init_dense, init_zero_dense};

pub(crate) fn init_motion_comp(params: &mut ParamSet, cfg: &NetConfig, seed: u64) {
    let d_in = cfg.pose_dims() + cfg.motion_dims + cfg.aux_dims;
    init_stack(params, "comp.motion", d_in, cfg.gru_hidden, cfg.gru_layers, seed);
    init_zero_dense(params, "comp.motion.head", cfg.gru_hidden, cfg.pose_dims());
}

pub(crate) fn init_shape_comp(params: &mut ParamSet, cfg: &NetConfig, seed: u64) {
    let d_in = cfg.aux_dims + 9 * cfg.masked_joints().len();
    init_stack(params, "comp.shape", d_in, cfg.gru_hidden, cfg.gru_layers, seed);
    init_dense(params, "comp.shape.latent", cfg.gru_hidden, cfg.shape_latent, seed);
    let mut rng = rng_for(seed, "comp.shape.embed");
    params.insert("comp.shape.embed", uniform(&[cfg.verts, cfg.vertex_embed], 1.0, &mut rng));
    init_dense(params, "comp.shape.dec0", cfg.shape_latent + cfg.vertex_embed, cfg.decoder_hidden, seed);
    init_zero_dense(params, "comp.shape.dec1", cfg.decoder_hidden, 3);
}

/// `poses + head(GRU([poses_t ‖ c_m ‖ c_a]))`, `[L,3J]`.
pub fn motion_comp(g: &mut Graph, p: &BoundParams, cfg: &NetConfig, poses: Var, c_m: Var, c_a: Var) -> Result<Var> {
    let s = g.shape(poses).to_vec();
    if s.len() != 2 || s[1] != cfg.pose_dims() || g.value(c_m).len() != cfg.motion_dims || g.value(c_a).len() != cfg.aux_dims {
        return dim_err(
            "motion_comp",
            format!("poses {s:?}, c_m {:?}, c_a {:?}", g.shape(c_m), g.shape(c_a)),
        );
    }
    let l = s[0];
    let codes = g.concat_cols(&[c_m, c_a])?;
    let codes = g.expand_rows(codes, l);
    let input = g.concat_cols(&[poses, codes])?;
    let layers = GateVars::stack_from_bound(p, "comp.motion", cfg.gru_layers)?;
    let hs = stacked_gru(g, input, &layers)?;
    let residual = dense(g, p, "comp.motion.head", hs)?;
    g.add(poses, residual)
}

/// Canonical offsets `[V,3]` for each frame, conditioned on `c_a` and the
/// rotation matrices of the clothing joints.
pub fn shape_comp(g: &mut Graph, p: &BoundParams, cfg: &NetConfig, c_a: Var, poses: Var) -> Result<Vec<Var>> {
    let s = g.shape(poses).to_vec();
    if s.len() != 2 || s[1] != cfg.pose_dims() || g.value(c_a).len() != cfg.aux_dims {
        return dim_err("shape_comp", format!("poses {s:?}, c_a {:?}", g.shape(c_a)));
    }
    let (l, j) = (s[0], cfg.joints);
    let mask = cfg.masked_joints();
    let mut rows = Vec::with_capacity(l);
    for t in 0..l {
        let mut parts = vec![as_row(g, c_a)?];
        if !mask.is_empty() {
            let theta = g.slice_rows(poses, t, t + 1)?;
            let theta = g.reshape(theta, &[j, 3])?;
            let rot = rodrigues_batch(g, theta)?;
            let sel = g.gather_rows(rot, &mask)?;
            parts.push(g.reshape(sel, &[1, 9 * mask.len()])?);
        }
        rows.push(g.concat_cols(&parts)?);
    }
    let input = g.concat_rows(&rows)?;
    let layers = GateVars::stack_from_bound(p, "comp.shape", cfg.gru_layers)?;
    let hs = stacked_gru(g, input, &layers)?;
    let latent = dense(g, p, "comp.shape.latent", hs)?;

    // First decoder layer split as latent·W_z + (embed·W_e + b), so each
    // frame costs one broadcast add instead of a [V, Z+E] product.
    let w0 = p.get("comp.shape.dec0.w")?;
    let wz = g.slice_rows(w0, 0, cfg.shape_latent)?;
    let we = g.slice_rows(w0, cfg.shape_latent, cfg.shape_latent + cfg.vertex_embed)?;
    let b0 = p.get("comp.shape.dec0.b")?;
    let embed = p.get("comp.shape.embed")?;
    let per_vertex = g.linear(embed, we, Some(b0))?;
    let per_frame = g.matmul(latent, wz)?;
    let (w1, b1) = (p.get("comp.shape.dec1.w")?, p.get("comp.shape.dec1.b")?);
    let mut out = Vec::with_capacity(l);
    for t in 0..l {
        let z = g.slice_rows(per_frame, t, t + 1)?;
        let h = g.add_row(per_vertex, z)?;
        let h = g.relu(h);
        out.push(g.linear(h, w1, Some(b1))?);
    }
    Ok(out)
}
