//! Gated recurrent units with PyTorch gate layout `[r | z | n]`.

use rand::Rng;

use super::graph::{Graph, Var};
use super::init::{rng_for, uniform};
use super::params::{BoundParams, ParamSet};
use super::tensor::Tensor;
use crate::error::{dim_err, Result};

/// Weights of one recurrent layer.
#[derive(Clone, Debug, PartialEq)]
pub struct GateWeights {
    /// `[d_in, 3h]`
    pub w_ih: Tensor,
    /// `[h, 3h]`
    pub w_hh: Tensor,
    pub b_ih: Tensor,
    pub b_hh: Tensor,
}

impl GateWeights {
    /// Uniform in `±1/sqrt(hidden)`.
    pub fn init(d_in: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let k = 1.0 / (hidden as f32).sqrt();
        Self {
            w_ih: uniform(&[d_in, 3 * hidden], k, rng),
            w_hh: uniform(&[hidden, 3 * hidden], k, rng),
            b_ih: uniform(&[3 * hidden], k, rng),
            b_hh: uniform(&[3 * hidden], k, rng),
        }
    }

    pub fn zeros(d_in: usize, hidden: usize) -> Self {
        Self {
            w_ih: Tensor::zeros(&[d_in, 3 * hidden]),
            w_hh: Tensor::zeros(&[hidden, 3 * hidden]),
            b_ih: Tensor::zeros(&[3 * hidden]),
            b_hh: Tensor::zeros(&[3 * hidden]),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_hh.dim(0)
    }

    pub fn input_dim(&self) -> usize {
        self.w_ih.dim(0)
    }

    pub fn bind(&self, g: &mut Graph, trainable: bool) -> GateVars {
        let mk = |g: &mut Graph, t: &Tensor| {
            if trainable {
                g.leaf(t.clone())
            } else {
                g.constant(t.clone())
            }
        };
        GateVars {
            w_ih: mk(g, &self.w_ih),
            w_hh: mk(g, &self.w_hh),
            b_ih: mk(g, &self.b_ih),
            b_hh: mk(g, &self.b_hh),
        }
    }

    pub fn store(&self, params: &mut ParamSet, prefix: &str) {
        params.insert(format!("{prefix}.w_ih"), self.w_ih.clone());
        params.insert(format!("{prefix}.w_hh"), self.w_hh.clone());
        params.insert(format!("{prefix}.b_ih"), self.b_ih.clone());
        params.insert(format!("{prefix}.b_hh"), self.b_hh.clone());
    }
}

/// Graph handles for one layer's weights.
#[derive(Clone, Copy, Debug)]
pub struct GateVars {
    pub w_ih: Var,
    pub w_hh: Var,
    pub b_ih: Var,
    pub b_hh: Var,
}

impl GateVars {
    pub fn from_bound(bound: &BoundParams, prefix: &str) -> Result<Self> {
        Ok(Self {
            w_ih: bound.get(&format!("{prefix}.w_ih"))?,
            w_hh: bound.get(&format!("{prefix}.w_hh"))?,
            b_ih: bound.get(&format!("{prefix}.b_ih"))?,
            b_hh: bound.get(&format!("{prefix}.b_hh"))?,
        })
    }

    /// Layers `{prefix}.l0`, `{prefix}.l1`, … present in `bound`.
    pub fn stack_from_bound(bound: &BoundParams, prefix: &str, layers: usize) -> Result<Vec<Self>> {
        (0..layers)
            .map(|l| Self::from_bound(bound, &format!("{prefix}.l{l}")))
            .collect()
    }
}

/// Initialize a `layers`-deep stack under `{prefix}.l{i}` in `params`.
pub fn init_stack(params: &mut ParamSet, prefix: &str, d_in: usize, hidden: usize, layers: usize, seed: u64) {
    for l in 0..layers {
        let name = format!("{prefix}.l{l}");
        let mut rng = rng_for(seed, &name);
        let din = if l == 0 { d_in } else { hidden };
        GateWeights::init(din, hidden, &mut rng).store(params, &name);
    }
}

fn as_row(g: &mut Graph, v: Var) -> Result<Var> {
    if g.value(v).rank() == 1 {
        let n = g.value(v).len();
        g.reshape(v, &[1, n])
    } else {
        Ok(v)
    }
}

/// Cell update given the precomputed input projection `gi = x·W_ih + b_ih`.
fn cell_from_projection(g: &mut Graph, gi: Var, h: Var, w: &GateVars) -> Result<Var> {
    let hid = g.shape(w.w_hh)[0];
    let gh = g.linear(h, w.w_hh, Some(w.b_hh))?;
    let gi_r = g.slice_cols(gi, 0, hid)?;
    let gi_z = g.slice_cols(gi, hid, 2 * hid)?;
    let gi_n = g.slice_cols(gi, 2 * hid, 3 * hid)?;
    let gh_r = g.slice_cols(gh, 0, hid)?;
    let gh_z = g.slice_cols(gh, hid, 2 * hid)?;
    let gh_n = g.slice_cols(gh, 2 * hid, 3 * hid)?;
    let r_pre = g.add(gi_r, gh_r)?;
    let r = g.sigmoid(r_pre);
    let z_pre = g.add(gi_z, gh_z)?;
    let z = g.sigmoid(z_pre);
    let rn = g.mul(r, gh_n)?;
    let n_pre = g.add(gi_n, rn)?;
    let n = g.tanh(n_pre);
    // h' = (1 - z)·n + z·h = n + z·(h - n)
    let diff = g.sub(h, n)?;
    let zd = g.mul(z, diff)?;
    g.add(n, zd)
}

/// One recurrent step: `x[d_in]` or `[1,d_in]`, `h[h]` or `[1,h]` → `[1,h]`.
pub fn gru_cell(g: &mut Graph, x: Var, h: Var, w: &GateVars) -> Result<Var> {
    let x = as_row(g, x)?;
    let h = as_row(g, h)?;
    let (d_in, hid) = (g.shape(w.w_ih)[0], g.shape(w.w_hh)[0]);
    if g.shape(x)[1] != d_in || g.shape(h)[1] != hid || g.shape(w.w_ih)[1] != 3 * hid {
        return dim_err(
            "gru_cell",
            format!(
                "x {:?}, h {:?}, w_ih {:?}, w_hh {:?}",
                g.shape(x),
                g.shape(h),
                g.shape(w.w_ih),
                g.shape(w.w_hh)
            ),
        );
    }
    let gi = g.linear(x, w.w_ih, Some(w.b_ih))?;
    cell_from_projection(g, gi, h, w)
}

/// Run one layer over `seq[L, d_in]` from a zero state; returns `[L, h]`.
pub fn gru_layer(g: &mut Graph, seq: Var, w: &GateVars) -> Result<Var> {
    let shape = g.shape(seq).to_vec();
    if shape.len() != 2 || shape[0] == 0 {
        return dim_err("gru_layer", format!("need a non-empty [L, d_in] sequence, got {:?}", shape));
    }
    let (d_in, hid) = (g.shape(w.w_ih)[0], g.shape(w.w_hh)[0]);
    if shape[1] != d_in {
        return dim_err("gru_layer", format!("input width {} vs w_ih rows {}", shape[1], d_in));
    }
    let gi_all = g.linear(seq, w.w_ih, Some(w.b_ih))?;
    let mut h = g.constant(Tensor::zeros(&[1, hid]));
    let mut outs = Vec::with_capacity(shape[0]);
    for t in 0..shape[0] {
        let gi = g.slice_rows(gi_all, t, t + 1)?;
        h = cell_from_projection(g, gi, h, w)?;
        outs.push(h);
    }
    g.concat_rows(&outs)
}

/// Multi-layer recurrent stack; returns the top layer's per-step outputs.
pub fn stacked_gru(g: &mut Graph, seq: Var, layers: &[GateVars]) -> Result<Var> {
    if layers.is_empty() {
        return dim_err("stacked_gru", "no layers");
    }
    let mut x = seq;
    for w in layers {
        x = gru_layer(g, x, w)?;
    }
    Ok(x)
}

/// Forward-only convenience wrapper around [`gru_cell`].
pub fn gru_cell_eval(x: &Tensor, h: &Tensor, w: &GateWeights) -> Result<Tensor> {
    let mut g = Graph::new();
    let xv = g.constant(x.clone());
    let hv = g.constant(h.clone());
    let wv = w.bind(&mut g, false);
    let out = gru_cell(&mut g, xv, hv, &wv)?;
    let hid = w.hidden();
    g.value(out).clone().reshape(&[hid])
}

/// Forward-only convenience wrapper around [`stacked_gru`].
pub fn stacked_gru_eval(seq: &Tensor, layers: &[GateWeights]) -> Result<Tensor> {
    let mut g = Graph::new();
    let s = g.constant(seq.clone());
    let vars: Vec<GateVars> = layers.iter().map(|w| w.bind(&mut g, false)).collect();
    let out = stacked_gru(&mut g, s, &vars)?;
    Ok(g.value(out).clone())
}
