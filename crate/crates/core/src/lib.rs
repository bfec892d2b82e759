//! Limited-angle tomography with joint reconstruction and directional
//! sinogram inpainting.

pub mod baselines;
pub mod config;
pub mod energy;
pub mod error;
pub mod experiment;
pub mod field;
pub mod io;
pub mod metrics;
pub mod phantoms;
pub mod regularizers;
pub mod runner;
pub mod solvers;
pub mod tomo;

pub use error::{Error, Result};

// The guide's code blocks run as doctests: each chapter becomes the docs of
// an empty module, so `cargo test --doc` checks the book too.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/geometry.md")]
    mod geometry {}
    #[doc = include_str!("../../../book/src/phantoms.md")]
    mod phantoms {}
    #[doc = include_str!("../../../book/src/regularizers.md")]
    mod regularizers {}
    #[doc = include_str!("../../../book/src/joint-energy.md")]
    mod joint_energy {}
    #[doc = include_str!("../../../book/src/solvers.md")]
    mod solvers {}
    #[doc = include_str!("../../../book/src/criticality.md")]
    mod criticality {}
    #[doc = include_str!("../../../book/src/baselines-metrics.md")]
    mod baselines_metrics {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
