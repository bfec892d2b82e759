//! Directional TV inpainting of a single image.

use ndarray::Array2;

use super::joint::GRAD_NORM;
use super::pdhg::{Block, DualTerm, PdhgOptions, PdhgOutcome, PdhgProblem, PrimalTerm, TensorGradient};
use crate::error::{check_shape, Error, Result};
use crate::regularizers::TensorField;

/// `argmin_v ½ Σ_known (v − f)² + β ‖A ∇v‖₂,₁`: denoises `f` where it is
/// known and fills in the rest. `a = None` is isotropic TV.
pub fn inpaint(
    f: &Array2<f64>,
    known: &Array2<bool>,
    a: Option<&TensorField>,
    beta: f64,
    opts: &PdhgOptions,
) -> Result<PdhgOutcome> {
    check_shape(f.dim(), known.dim())?;
    if let Some(a) = a {
        check_shape(f.dim(), a.dim())?;
    }
    if !(beta >= 0.0) {
        return Err(Error::Config(format!("inpainting weight must be non-negative, got {beta}")));
    }
    let norm = GRAD_NORM * a.map_or(1.0, |a| a.max_frobenius().max(1e-12));
    let problem = PdhgProblem {
        primal: PrimalTerm {
            weight: known.mapv(|k| if k { 1.0 } else { 0.0 }),
            center: f.clone(),
            nonnegative: false,
        },
        blocks: vec![
            Block::new(TensorGradient { tensor: a }, DualTerm::GroupNorm { beta, shift: None }).with_norm(norm),
        ],
        constant: 0.0,
    };
    let start = Array2::from_shape_fn(f.dim(), |idx| if known[idx] { f[idx] } else { 0.0 });
    problem.solve(&start, opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_fills_its_hole() {
        let f = Array2::from_elem((9, 9), 2.0);
        let known = Array2::from_shape_fn(f.dim(), |(i, j)| !(3..6).contains(&i) || !(3..6).contains(&j));
        let opts = PdhgOptions {
            max_iters: 2000,
            tol: 0.0,
            ..Default::default()
        };
        let out = inpaint(&f, &known, None, 0.1, &opts).unwrap();
        assert!(out.x.iter().all(|&v| (v - 2.0).abs() < 1e-6));
    }
}
