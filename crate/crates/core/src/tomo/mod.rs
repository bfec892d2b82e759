//! Parallel-beam geometry, the discrete X-ray transform and acquisition masks.
//!
//! Everything downstream (solvers, baselines, the joint model) talks to the
//! data through [`XrayTransform`] and [`SampleMask`].

mod geometry;
mod mask;
mod projector;

pub use geometry::{Image, ProjectionGeometry, Sinogram};
pub use mask::{apply_mask, make_limited_angle_mask, wedge_angles, SampleMask};
pub use projector::{back_project, forward_project, XrayTransform};
