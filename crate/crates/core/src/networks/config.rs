use crate::error::{Error, Result};
use crate::tensorcore::{ParamSet, Tensor};

/// Network sizes. `full` follows the published architecture; `desk` and
/// `micro` scale widths down for CPU-sized experiments.
#[derive(Clone, Debug, PartialEq)]
pub struct NetConfig {
    pub joints: usize,
    pub verts: usize,
    pub shape_dims: usize,
    pub seq_len: usize,
    pub n_points: usize,
    pub motion_dims: usize,
    pub aux_dims: usize,
    /// Output widths of the five residual blocks of the spatial encoders.
    pub spatial_widths: [usize; 5],
    pub feat_hidden: usize,
    pub feat_layers: usize,
    pub gru_hidden: usize,
    pub gru_layers: usize,
    pub shape_latent: usize,
    pub vertex_embed: usize,
    pub decoder_hidden: usize,
    /// Joints whose rotations condition the offset network.
    pub joint_mask: Vec<bool>,
}

/// Joints that drive clothing deformation: everything except the hands, feet
/// and head on the 24-joint skeleton, and except leaf joints elsewhere.
pub fn default_joint_mask(parents: &[Option<usize>]) -> Vec<bool> {
    if parents.len() == 24 {
        return (0..24).map(|j| ![10, 11, 15, 22, 23].contains(&j)).collect();
    }
    (0..parents.len()).map(|j| parents.iter().any(|&p| p == Some(j))).collect()
}

impl NetConfig {
    pub fn full(motion_dims: usize, parents: &[Option<usize>]) -> Self {
        Self {
            joints: parents.len(),
            verts: 6890,
            shape_dims: 10,
            seq_len: 30,
            n_points: 8192,
            motion_dims,
            aux_dims: 128,
            spatial_widths: [64, 128, 128, 256, 512],
            feat_hidden: 128,
            feat_layers: 3,
            gru_hidden: 512,
            gru_layers: 2,
            shape_latent: 128,
            vertex_embed: 16,
            decoder_hidden: 128,
            joint_mask: default_joint_mask(parents),
        }
    }

    pub fn desk(motion_dims: usize, parents: &[Option<usize>]) -> Self {
        Self {
            verts: 600,
            n_points: 256,
            aux_dims: 32,
            spatial_widths: [16, 32, 32, 32, 64],
            feat_hidden: 32,
            gru_hidden: 64,
            shape_latent: 32,
            decoder_hidden: 32,
            ..Self::full(motion_dims, parents)
        }
    }

    pub fn micro(motion_dims: usize, parents: &[Option<usize>]) -> Self {
        Self {
            verts: 24,
            seq_len: 3,
            n_points: 16,
            aux_dims: 8,
            spatial_widths: [8; 5],
            feat_hidden: 8,
            gru_hidden: 8,
            shape_latent: 8,
            decoder_hidden: 8,
            ..Self::full(motion_dims, parents)
        }
    }

    pub fn preset(name: &str, motion_dims: usize, parents: &[Option<usize>]) -> Result<Self> {
        match name {
            "full" => Ok(Self::full(motion_dims, parents)),
            "desk" => Ok(Self::desk(motion_dims, parents)),
            "micro" => Ok(Self::micro(motion_dims, parents)),
            _ => Err(Error::Config(format!("unknown preset {name:?} (full, desk, micro)"))),
        }
    }

    pub fn pose_dims(&self) -> usize {
        3 * self.joints
    }

    pub fn masked_joints(&self) -> Vec<usize> {
        (0..self.joints).filter(|&j| self.joint_mask[j]).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("joints", self.joints),
            ("verts", self.verts),
            ("seq_len", self.seq_len),
            ("n_points", self.n_points),
            ("motion_dims", self.motion_dims),
            ("aux_dims", self.aux_dims),
            ("feat_hidden", self.feat_hidden),
            ("feat_layers", self.feat_layers),
            ("gru_hidden", self.gru_hidden),
            ("gru_layers", self.gru_layers),
            ("shape_latent", self.shape_latent),
            ("vertex_embed", self.vertex_embed),
            ("decoder_hidden", self.decoder_hidden),
        ];
        if let Some((k, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{k} must be positive")));
        }
        if self.spatial_widths.contains(&0) {
            return Err(Error::Config("spatial widths must be positive".into()));
        }
        if self.joint_mask.len() != self.joints {
            return Err(Error::Config(format!("joint mask has {} entries for {} joints", self.joint_mask.len(), self.joints)));
        }
        Ok(())
    }

    /// `config.*` entries.
    pub fn store(&self, params: &mut ParamSet) {
        let scalars = [
            ("joints", self.joints),
            ("verts", self.verts),
            ("shape_dims", self.shape_dims),
            ("seq_len", self.seq_len),
            ("n_points", self.n_points),
            ("motion_dims", self.motion_dims),
            ("aux_dims", self.aux_dims),
            ("feat_hidden", self.feat_hidden),
            ("feat_layers", self.feat_layers),
            ("gru_hidden", self.gru_hidden),
            ("gru_layers", self.gru_layers),
            ("shape_latent", self.shape_latent),
            ("vertex_embed", self.vertex_embed),
            ("decoder_hidden", self.decoder_hidden),
        ];
        for (k, v) in scalars {
            params.insert(format!("config.{k}"), Tensor::scalar(v as f32));
        }
        params.insert("config.spatial_widths", Tensor::vector(self.spatial_widths.iter().map(|&w| w as f32).collect()));
        params.insert(
            "config.joint_mask",
            Tensor::vector(self.joint_mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect()),
        );
    }

    pub fn load(params: &ParamSet) -> Result<Self> {
        let int = |k: &str| -> Result<usize> {
            let v = params.get(&format!("config.{k}"))?.item();
            if v < 0.0 || v.fract() != 0.0 {
                return Err(Error::Config(format!("config.{k} = {v} is not a count")));
            }
            Ok(v as usize)
        };
        let widths = params.get("config.spatial_widths")?;
        if widths.len() != 5 {
            return Err(Error::Config("config.spatial_widths needs 5 entries".into()));
        }
        let mut spatial_widths = [0; 5];
        for (w, &x) in spatial_widths.iter_mut().zip(widths.data()) {
            *w = x as usize;
        }
        let cfg = Self {
            joints: int("joints")?,
            verts: int("verts")?,
            shape_dims: int("shape_dims")?,
            seq_len: int("seq_len")?,
            n_points: int("n_points")?,
            motion_dims: int("motion_dims")?,
            aux_dims: int("aux_dims")?,
            spatial_widths,
            feat_hidden: int("feat_hidden")?,
            feat_layers: int("feat_layers")?,
            gru_hidden: int("gru_hidden")?,
            gru_layers: int("gru_layers")?,
            shape_latent: int("shape_latent")?,
            vertex_embed: int("vertex_embed")?,
            decoder_hidden: int("decoder_hidden")?,
            joint_mask: params.get("config.joint_mask")?.data().iter().map(|&m| m != 0.0).collect(),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
