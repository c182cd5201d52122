//! Linear motion model: PCA over pose deltas relative to the first frame.

pub mod lmm;
pub mod pca;

pub use lmm::{build_delta_matrix, fit_motion_basis, lmm_decode, lmm_encode, BasisVars, MotionBasis};
pub use pca::{explained_fraction, fit_pca, select_components, Pca};
