use std::collections::BTreeMap;

use super::params::{GradMap, ParamSet};
use super::tensor::Tensor;
use crate::error::{dim_err, Error, Result};

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub step: u64,
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    m: BTreeMap<String, Tensor>,
    v: BTreeMap<String, Tensor>,
}

impl AdamState {
    pub fn new(lr: f32) -> Self {
        Self {
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn first_moment(&self, name: &str) -> Option<&Tensor> {
        self.m.get(name)
    }

    pub fn second_moment(&self, name: &str) -> Option<&Tensor> {
        self.v.get(name)
    }

    /// One optimizer step. Parameters without a gradient entry are left alone.
    /// Nothing is modified when any gradient is non-finite.
    pub fn update(&mut self, params: &mut ParamSet, grads: &GradMap) -> Result<()> {
        for (name, g) in grads {
            let p = params.get(name)?;
            if p.shape() != g.shape() {
                return dim_err(
                    "adam_update",
                    format!("{}: param {:?} vs grad {:?}", name, p.shape(), g.shape()),
                );
            }
            if !g.is_finite() {
                return Err(Error::NonFinite(format!("gradient of {}", name)));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (self.beta1 as f64, self.beta2 as f64);
        let bc1 = 1.0 - b1.powi(t);
        let bc2 = 1.0 - b2.powi(t);
        let lr = self.lr as f64;
        let eps = self.eps as f64;
        for (name, g) in grads {
            let p = params.get_mut(name).expect("checked above");
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(g.shape()));
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(g.shape()));
            let (md, vd, pd) = (m.data_mut(), v.data_mut(), p.data_mut());
            for i in 0..g.len() {
                let gi = g.data()[i] as f64;
                let mi = b1 * md[i] as f64 + (1.0 - b1) * gi;
                let vi = b2 * vd[i] as f64 + (1.0 - b2) * gi * gi;
                md[i] = mi as f32;
                vd[i] = vi as f32;
                let mhat = mi / bc1;
                let vhat = vi / bc2;
                pd[i] = (pd[i] as f64 - lr * mhat / (vhat.sqrt() + eps)) as f32;
            }
        }
        Ok(())
    }
}
