//! Encoders and compensation networks built on the tensor core.

mod comp;
mod config;
mod encoders;
mod layers;

pub use comp::{motion_comp, shape_comp};
pub use config::{default_joint_mask, NetConfig};
pub use encoders::{encode_sequence, frame_features, spatial_encode, temporal_encode, CodeVars};

use crate::error::Result;
use crate::tensorcore::ParamSet;

/// Parameter namespaces trained in the first stage.
pub const ENCODER_PREFIXES: [&str; 5] = ["enc.shape.", "enc.pose.", "enc.feat.", "enc.gru_m.", "enc.gru_a."];
pub const COMP_PREFIXES: [&str; 2] = ["comp.motion.", "comp.shape."];

/// Deterministic weights for every network; each tensor draws from its own
/// `(seed, name)` stream. Output heads of both compensation networks are zero.
pub fn init_weights(cfg: &NetConfig, seed: u64) -> Result<ParamSet> {
    cfg.validate()?;
    let mut p = ParamSet::new();
    encoders::init_spatial(&mut p, "enc.shape", &cfg.spatial_widths, cfg.shape_dims, seed);
    encoders::init_spatial(&mut p, "enc.pose", &cfg.spatial_widths, cfg.pose_dims(), seed);
    encoders::init_temporal(&mut p, cfg, seed);
    comp::init_motion_comp(&mut p, cfg, seed);
    comp::init_shape_comp(&mut p, cfg, seed);
    Ok(p)
}

pub fn is_encoder_param(name: &str) -> bool {
    ENCODER_PREFIXES.iter().any(|p| name.starts_with(p))
}

pub fn is_comp_param(name: &str) -> bool {
    COMP_PREFIXES.iter().any(|p| name.starts_with(p))
}

/// Number of trainable scalars (excludes `config.*`).
pub fn param_count(params: &ParamSet) -> usize {
    params.iter().filter(|(n, _)| is_encoder_param(n) || is_comp_param(n)).map(|(_, t)| t.len()).sum()
}
