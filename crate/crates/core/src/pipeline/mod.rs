//! Training, reconstruction, auto-decoding and the applications built on it.

mod checkpoint;
mod decode;
mod fit;
mod meta;
mod setup;
mod train;

pub use checkpoint::{Checkpoint, LatentTuple};
pub use decode::{decode_codes, decode_graph, posed_joints_var, Bound, CodeInputs, DecodeParts, DecodedVars, Reconstruction};
pub use fit::{
    autodecode_fit, complete_spatial, complete_temporal, encode, frames_mpjpe, half_space_cull, predict_future, random_codes,
    random_mask, reconstruct, retarget, Completion, FitConfig, FitLoss, FitResult, Observations,
};
pub use meta::{content_hash, write_run_meta};
pub use setup::{build_checkpoint, preset_dims, preset_model, preset_synth};
pub use train::{item_loss, item_seed, prepare_items, train, train_stage1, train_stage2, TrainConfig, TrainItem, TrainReport};
