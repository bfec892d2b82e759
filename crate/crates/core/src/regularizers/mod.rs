//! Discrete differential operators, total variation and the directional
//! machinery built on structure tensors.
//!
//! Axis convention for every 2D field: component `x` differences along
//! columns (the second index), component `y` along rows (the first index).
//! For sinograms this makes `x` the detector axis and `y` the angle axis.

mod anisotropy;
mod blur;
mod diff;
mod tensor;

pub use anisotropy::{
    anisotropy_from_structure, anisotropy_tensor, danisotropy_dd, AnisotropyLinearization,
    AnisotropyModel, CoherenceWeights, Isotropic, SmoothParts, TanhCoherence,
};
pub use blur::{gaussian_blur, gaussian_blur_adjoint, GaussianKernel};
pub use diff::{div, dtv, grad, tv, GradientField};
pub use tensor::{eig2x2, eig_sym2, structure_tensor, EigenField, SymEig, TensorField};
