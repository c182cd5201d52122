//! Parametric skinned body decoder.

pub mod kinematics;
pub mod model;
pub mod rotation;
pub mod toy;

pub use kinematics::{apply_affine, forward_kinematics_op, validate_parents};
pub use model::{forward_kinematics, BodyModel, BodyVars, Pose};
pub use rotation::{rodrigues, rodrigues_batch};
pub use toy::make_toy_model;

/// Joint names of the 24-joint humanoid layout.
pub const SMPL_JOINT_NAMES: [&str; 24] = [
    "pelvis", "left_hip", "right_hip", "spine1", "left_knee", "right_knee", "spine2",
    "left_ankle", "right_ankle", "spine3", "left_foot", "right_foot", "neck",
    "left_collar", "right_collar", "head", "left_shoulder", "right_shoulder",
    "left_elbow", "right_elbow", "left_wrist", "right_wrist", "left_hand", "right_hand",
];
