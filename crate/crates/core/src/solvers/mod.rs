//! Convex inner solvers, the alternating joint solver and criticality tools.

pub mod criticality;
pub mod inpaint;
pub mod joint;
pub mod pdhg;
pub mod toy;

pub use criticality::{cone_bound_check, slope, ConeReport, SlopeEstimate, SlopeOptions};
pub use inpaint::inpaint;
pub use joint::{run_joint, x_step, y_step, JointState, RunOptions, StepOutcome, TraceRow};
pub use pdhg::{
    Block, DualTerm, FnMap, LinearMap, PdhgOptions, PdhgOutcome, PdhgProblem, PrimalTerm, Projection, TensorGradient, WarmStart,
};
pub use toy::{run_toy_2axis, toy_energy, ToyState};
