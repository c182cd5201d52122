//! Point-cloud encoders: residual PointNets for shape and initial pose, and a
//! shared per-frame PointNet feeding two recurrent stacks for the motion and
//! auxiliary codes.

use crate::error::{dim_err, Error, Result};
use crate::tensorcore::gru::{init_stack, stacked_gru};
use crate::tensorcore::{BoundParams, GateVars, Graph, ParamSet, Tensor, Var};

use super::config::NetConfig;
use super::layers::{as_row, dense, init_dense};

fn block_input(widths: &[usize; 5], i: usize) -> usize {
    if i == 0 {
        widths[0]
    } else {
        2 * widths[i - 1]
    }
}

pub(crate) fn init_spatial(params: &mut ParamSet, prefix: &str, widths: &[usize; 5], out_dim: usize, seed: u64) {
    init_dense(params, &format!("{prefix}.fc_pos"), 3, widths[0], seed);
    for (i, &w) in widths.iter().enumerate() {
        let d_in = block_input(widths, i);
        init_dense(params, &format!("{prefix}.block{i}.fc0"), d_in, w, seed);
        init_dense(params, &format!("{prefix}.block{i}.fc1"), w, w, seed);
        if d_in != w {
            let name = format!("{prefix}.block{i}.shortcut");
            init_dense(params, &name, d_in, w, seed);
            params.remove(&format!("{name}.b"));
        }
    }
    init_dense(params, &format!("{prefix}.fc_out"), widths[4], out_dim, seed);
}

fn res_block(g: &mut Graph, p: &BoundParams, name: &str, x: Var) -> Result<Var> {
    let a = g.relu(x);
    let h = dense(g, p, &format!("{name}.fc0"), a)?;
    let h = g.relu(h);
    let dx = dense(g, p, &format!("{name}.fc1"), h)?;
    let shortcut = match p.get(&format!("{name}.shortcut.w")) {
        Ok(w) => g.matmul(x, w)?,
        Err(_) => x,
    };
    g.add(shortcut, dx)
}

/// Residual PointNet: after each of the first four blocks the max-pooled
/// feature is concatenated back to every point; the last block is pooled and
/// mapped to the output.
pub fn spatial_encode(g: &mut Graph, p: &BoundParams, prefix: &str, points: Var) -> Result<Var> {
    let shape = g.shape(points).to_vec();
    if shape.len() != 2 || shape[1] != 3 {
        return dim_err("spatial_encode", format!("points {shape:?}"));
    }
    if shape[0] == 0 {
        return Err(Error::InvalidArgument("spatial_encode: empty point cloud".into()));
    }
    let n = shape[0];
    let mut x = dense(g, p, &format!("{prefix}.fc_pos"), points)?;
    for i in 0..5 {
        x = res_block(g, p, &format!("{prefix}.block{i}"), x)?;
        if i < 4 {
            let pooled = g.max_rows(x)?;
            let pooled = g.expand_rows(pooled, n);
            x = g.concat_cols(&[x, pooled])?;
        }
    }
    let pooled = g.max_rows(x)?;
    let pooled = g.relu(pooled);
    let pooled = as_row(g, pooled)?;
    let out = dense(g, p, &format!("{prefix}.fc_out"), pooled)?;
    let d = g.value(out).len();
    g.reshape(out, &[d])
}

pub(crate) fn init_temporal(params: &mut ParamSet, cfg: &NetConfig, seed: u64) {
    for k in 0..cfg.feat_layers {
        let d_in = if k == 0 { 3 } else { cfg.feat_hidden };
        init_dense(params, &format!("enc.feat.fc{k}"), d_in, cfg.feat_hidden, seed);
    }
    for (name, out) in [("enc.gru_m", cfg.motion_dims), ("enc.gru_a", cfg.aux_dims)] {
        init_stack(params, name, cfg.feat_hidden, cfg.gru_hidden, cfg.gru_layers, seed);
        init_dense(params, &format!("{name}.head"), cfg.gru_hidden, out, seed);
    }
}

/// Shared shallow PointNet: `[L, feat_hidden]`, one max-pooled row per frame.
pub fn frame_features(g: &mut Graph, p: &BoundParams, cfg: &NetConfig, frames: &[Var]) -> Result<Var> {
    if frames.is_empty() {
        return Err(Error::InvalidArgument("temporal_encode: empty sequence".into()));
    }
    let mut bounds = Vec::with_capacity(frames.len());
    let mut start = 0;
    for &f in frames {
        let s = g.shape(f);
        if s.len() != 2 || s[1] != 3 || s[0] == 0 {
            return dim_err("temporal_encode", format!("frame {s:?}"));
        }
        bounds.push((start, start + s[0]));
        start += s[0];
    }
    let mut x = g.concat_rows(frames)?;
    for k in 0..cfg.feat_layers {
        x = dense(g, p, &format!("enc.feat.fc{k}"), x)?;
        x = g.relu(x);
    }
    let mut rows = Vec::with_capacity(frames.len());
    for (lo, hi) in bounds {
        let f = g.slice_rows(x, lo, hi)?;
        let pooled = g.max_rows(f)?;
        rows.push(as_row(g, pooled)?);
    }
    g.concat_rows(&rows)
}

fn final_step_head(g: &mut Graph, p: &BoundParams, cfg: &NetConfig, name: &str, feats: Var) -> Result<Var> {
    let layers = GateVars::stack_from_bound(p, name, cfg.gru_layers)?;
    let hs = stacked_gru(g, feats, &layers)?;
    let l = g.shape(hs)[0];
    let last = g.slice_rows(hs, l - 1, l)?;
    let out = dense(g, p, &format!("{name}.head"), last)?;
    let d = g.value(out).len();
    g.reshape(out, &[d])
}

/// Motion and auxiliary codes from the final recurrent step.
pub fn temporal_encode(g: &mut Graph, p: &BoundParams, cfg: &NetConfig, frames: &[Var]) -> Result<(Var, Var)> {
    let feats = frame_features(g, p, cfg, frames)?;
    let c_m = final_step_head(g, p, cfg, "enc.gru_m", feats)?;
    let c_a = final_step_head(g, p, cfg, "enc.gru_a", feats)?;
    Ok((c_m, c_a))
}

/// The four codes of a point-cloud sequence; shape and initial pose are read
/// from the first frame.
#[derive(Clone, Copy, Debug)]
pub struct CodeVars {
    pub c_s: Var,
    pub c_p: Var,
    pub c_m: Var,
    pub c_a: Var,
}

pub fn encode_sequence(g: &mut Graph, p: &BoundParams, cfg: &NetConfig, frames: &[Tensor]) -> Result<CodeVars> {
    let vars: Vec<Var> = frames.iter().map(|f| g.constant(f.clone())).collect();
    if vars.is_empty() {
        return Err(Error::InvalidArgument("encode: empty sequence".into()));
    }
    let c_s = spatial_encode(g, p, "enc.shape", vars[0])?;
    let c_p = spatial_encode(g, p, "enc.pose", vars[0])?;
    let (c_m, c_a) = temporal_encode(g, p, cfg, &vars)?;
    Ok(CodeVars { c_s, c_p, c_m, c_a })
}
