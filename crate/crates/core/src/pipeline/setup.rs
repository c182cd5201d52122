//! Preset-sized body model, corpus settings and checkpoint construction.

use crate::body_model::{make_toy_model, BodyModel};
use crate::dataio::SynthConfig;
use crate::error::{Error, Result};
use crate::motion_model::MotionBasis;
use crate::networks::NetConfig;

use super::checkpoint::Checkpoint;

/// `(joints, verts, seq_len)` of a preset.
pub fn preset_dims(preset: &str) -> Result<(usize, usize, usize)> {
    match preset {
        "full" => Ok((24, 6890, 30)),
        "desk" => Ok((24, 600, 30)),
        "micro" => Ok((4, 24, 3)),
        p => Err(Error::Config(format!("unknown preset {p:?} (full, desk, micro)"))),
    }
}

pub fn preset_model(preset: &str, seed: u64) -> Result<BodyModel> {
    let (j, v, _) = preset_dims(preset)?;
    make_toy_model(j, v, 10, seed)
}

pub fn preset_synth(preset: &str) -> Result<SynthConfig> {
    let (_, _, l) = preset_dims(preset)?;
    Ok(SynthConfig { seq_len: l, ..SynthConfig::default() })
}

/// Fresh checkpoint for a preset around an existing model and basis.
pub fn build_checkpoint(preset: &str, model: BodyModel, basis: MotionBasis, seed: u64) -> Result<Checkpoint> {
    let cfg = NetConfig::preset(preset, basis.code_dims(), &model.parents)?;
    Checkpoint::init(cfg, model, basis, seed)
}
