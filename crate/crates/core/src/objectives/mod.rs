//! Training losses, fitting losses and evaluation metrics.

pub mod geometry;
pub mod losses;
pub mod metrics;
pub mod ops;

pub use geometry::{sample_surface, Mesh, SamplePattern};
pub use losses::{
    prior_terms, prior_terms_var, shape_l2, shape_l2_var, total_loss, vertex_l1, vertex_l1_var, LossOutputs,
    LossTargets, LossWeights, PriorWeights,
};
pub use metrics::{chamfer, mpjpe_family, point_to_surface, pve, volumetric_iou, IouResult, JointErrors, MetricReport};
pub use ops::{chamfer_var, point_to_surface_var, surface_samples_var};
