use std::path::Path;

use crate::body_model::BodyModel;
use crate::dataio::{load_body_model, store_body_model, TensorArchive};
use crate::error::{Error, Result};
use crate::motion_model::MotionBasis;
use crate::networks::{init_weights, is_comp_param, is_encoder_param, NetConfig};
use crate::tensorcore::{ParamSet, Tensor};

/// Everything needed to decode codes into meshes and to encode point clouds:
/// body model, motion basis, network config and weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub cfg: NetConfig,
    pub model: BodyModel,
    pub basis: MotionBasis,
    /// Network weights only (`enc.*`, `comp.*`).
    pub params: ParamSet,
    /// Last completed training stage (0 = freshly initialized).
    pub stage: u8,
}

impl Checkpoint {
    pub fn init(cfg: NetConfig, model: BodyModel, basis: MotionBasis, seed: u64) -> Result<Self> {
        if cfg.joints != model.num_joints() || cfg.verts != model.num_vertices() || cfg.shape_dims != model.shape_dims() {
            return Err(Error::Config(format!(
                "config J={} V={} S={} does not match model J={} V={} S={}",
                cfg.joints,
                cfg.verts,
                cfg.shape_dims,
                model.num_joints(),
                model.num_vertices(),
                model.shape_dims()
            )));
        }
        if cfg.motion_dims != basis.code_dims() || cfg.seq_len != basis.seq_len || basis.pose_dims != cfg.pose_dims() {
            return Err(Error::Config(format!(
                "config K={} L={} does not match basis K={} L={} P={}",
                cfg.motion_dims,
                cfg.seq_len,
                basis.code_dims(),
                basis.seq_len,
                basis.pose_dims
            )));
        }
        let params = init_weights(&cfg, seed)?;
        Ok(Self { cfg, model, basis, params, stage: 0 })
    }

    pub fn to_archive(&self) -> TensorArchive {
        let mut p = self.params.clone();
        self.cfg.store(&mut p);
        p.insert("config.stage", Tensor::scalar(self.stage as f32));
        store_body_model(&self.model, &mut p, "model.");
        self.basis.store(&mut p);
        TensorArchive::from_params(&p)
    }

    pub fn from_archive(a: &TensorArchive) -> Result<Self> {
        let all = a.to_params();
        let cfg = NetConfig::load(&all)?;
        let model = load_body_model(&all, "model.")?;
        let basis = MotionBasis::load(&all)?;
        let stage = all.get("config.stage").map(|t| t.item() as u8).unwrap_or(0);
        let params: ParamSet = all
            .iter()
            .filter(|(n, _)| is_encoder_param(n) || is_comp_param(n))
            .map(|(n, t)| (n.clone(), t.clone()))
            .collect();
        let expected = init_weights(&cfg, 0)?;
        for (name, t) in expected.iter() {
            let got = params.get(name)?;
            if got.shape() != t.shape() {
                return Err(Error::Config(format!("{name}: shape {:?}, config implies {:?}", got.shape(), t.shape())));
            }
        }
        Ok(Self { cfg, model, basis, params, stage })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_archive().write(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_archive(&TensorArchive::read(path)?)
    }
}

/// The compositional code of one sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentTuple {
    pub c_s: Tensor,
    pub c_p: Tensor,
    pub c_m: Tensor,
    pub c_a: Tensor,
}

impl LatentTuple {
    pub fn zeros(cfg: &NetConfig) -> Self {
        Self {
            c_s: Tensor::zeros(&[cfg.shape_dims]),
            c_p: Tensor::zeros(&[cfg.pose_dims()]),
            c_m: Tensor::zeros(&[cfg.motion_dims]),
            c_a: Tensor::zeros(&[cfg.aux_dims]),
        }
    }

    pub fn to_params(&self) -> ParamSet {
        [("c_s", &self.c_s), ("c_p", &self.c_p), ("c_m", &self.c_m), ("c_a", &self.c_a)]
            .into_iter()
            .map(|(n, t)| (n.to_string(), t.clone()))
            .collect()
    }

    pub fn from_params(p: &ParamSet) -> Result<Self> {
        Ok(Self {
            c_s: p.get("c_s")?.clone(),
            c_p: p.get("c_p")?.clone(),
            c_m: p.get("c_m")?.clone(),
            c_a: p.get("c_a")?.clone(),
        })
    }

    pub fn check(&self, cfg: &NetConfig) -> Result<()> {
        let dims = [
            ("c_s", &self.c_s, cfg.shape_dims),
            ("c_p", &self.c_p, cfg.pose_dims()),
            ("c_m", &self.c_m, cfg.motion_dims),
            ("c_a", &self.c_a, cfg.aux_dims),
        ];
        for (n, t, d) in dims {
            if t.len() != d {
                return Err(Error::Dimension { op: "LatentTuple", detail: format!("{n} has {} entries, expected {d}", t.len()) });
            }
        }
        Ok(())
    }
}
