use crate::error::Result;
use crate::tensorcore::init::{rng_for, uniform};
use crate::tensorcore::{BoundParams, Graph, ParamSet, Tensor, Var};

/// `{name}.w [in,out]`, `{name}.b [out]`, uniform in `±1/sqrt(in)`.
pub(crate) fn init_dense(params: &mut ParamSet, name: &str, fan_in: usize, fan_out: usize, seed: u64) {
    let mut rng = rng_for(seed, name);
    let k = 1.0 / (fan_in.max(1) as f32).sqrt();
    params.insert(format!("{name}.w"), uniform(&[fan_in, fan_out], k, &mut rng));
    params.insert(format!("{name}.b"), uniform(&[fan_out], k, &mut rng));
}

pub(crate) fn init_zero_dense(params: &mut ParamSet, name: &str, fan_in: usize, fan_out: usize) {
    params.insert(format!("{name}.w"), Tensor::zeros(&[fan_in, fan_out]));
    params.insert(format!("{name}.b"), Tensor::zeros(&[fan_out]));
}

pub(crate) fn dense(g: &mut Graph, p: &BoundParams, name: &str, x: Var) -> Result<Var> {
    let w = p.get(&format!("{name}.w"))?;
    let b = p.get(&format!("{name}.b"))?;
    g.linear(x, w, Some(b))
}

pub(crate) fn as_row(g: &mut Graph, v: Var) -> Result<Var> {
    let n = g.value(v).len();
    g.reshape(v, &[1, n])
}
