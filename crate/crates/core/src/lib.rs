//! Compositional 4D human modeling.
//!
//! A sequence of posed, clothed body meshes is represented by four codes:
//! body shape, initial pose, a motion code driving a PCA motion model, and an
//! auxiliary code that feeds two recurrent compensation networks (per-frame
//! pose residuals and canonical per-vertex offsets). Codes come either from
//! point-cloud encoders or from latent optimization against observations.

pub mod error;
pub mod body_model;
pub mod cli;
pub mod dataio;
pub mod motion_model;
pub mod networks;
pub mod objectives;
pub mod pipeline;
pub mod tensorcore;

pub use error::{Error, Result};
