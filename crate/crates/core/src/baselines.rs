//! Comparison reconstructions: filtered backprojection, SIRT and
//! nonnegative TV-regularized least squares.

use std::f64::consts::PI;

use ndarray::Array2;
use rustfft::{num_complex::Complex, FftPlanner};

use crate::error::{check_shape, Error, Result};
use crate::solvers::joint::GRAD_NORM;
use crate::solvers::pdhg::{Block, DualTerm, PdhgOptions, PdhgOutcome, PdhgProblem, PrimalTerm, Projection, TensorGradient};
use crate::tomo::{SampleMask, XrayTransform};

/// Frequency apodization of the ramp filter.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum RampWindow {
    RamLak,
    #[default]
    Hann,
}

/// Ramp-filtered backprojection over the acquired views only.
pub fn fbp(op: &XrayTransform, mask: &SampleMask, b: &Array2<f64>, window: RampWindow) -> Result<Array2<f64>> {
    let g = op.geometry();
    check_shape(g.value_dim(), b.dim())?;
    check_shape(g.value_dim(), mask.flags.dim())?;
    let nb = g.detector_count();
    let d = g.detector_spacing();
    let pad = (2 * nb).next_power_of_two();

    // Spatial Ram-Lak kernel, circularly laid out, so that the zero-padded
    // product equals the linear convolution with the band-limited ramp.
    let mut kernel = vec![Complex::new(0.0, 0.0); pad];
    for (i, k) in kernel.iter_mut().enumerate() {
        let n = if i <= pad / 2 { i as i64 } else { i as i64 - pad as i64 };
        let v = if n == 0 {
            1.0 / (4.0 * d * d)
        } else if n % 2 != 0 {
            -1.0 / (PI * PI * (n * n) as f64 * d * d)
        } else {
            0.0
        };
        *k = Complex::new(v, 0.0);
    }
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(pad);
    fwd.process(&mut kernel);
    if window == RampWindow::Hann {
        for (i, k) in kernel.iter_mut().enumerate() {
            let f = if i <= pad / 2 { i } else { pad - i } as f64 / pad as f64; // in [0, ½]
            *k *= 0.5 * (1.0 + (2.0 * PI * f).cos());
        }
    }

    let inv = planner.plan_fft_inverse(pad);
    let weights = view_weights(g.angles_deg());
    let (height, width) = op.image_dim();
    let ps = op.pixel_size();
    let origin = g.bin_center(0);
    let mut out = Array2::<f64>::zeros((height, width));
    let mut buf = vec![Complex::new(0.0, 0.0); pad];
    for a in mask.kept_views() {
        for (i, c) in buf.iter_mut().enumerate() {
            let v = if i < nb && mask.flags[[a, i]] { b[[a, i]] } else { 0.0 };
            *c = Complex::new(v, 0.0);
        }
        fwd.process(&mut buf);
        for (c, k) in buf.iter_mut().zip(&kernel) {
            *c *= k;
        }
        inv.process(&mut buf);
        // rustfft leaves the inverse unnormalized; `d` is the quadrature
        // weight of the convolution sum.
        let q: Vec<f64> = buf[..nb].iter().map(|c| c.re * d / pad as f64).collect();

        let (s, c) = g.angles_deg()[a].to_radians().sin_cos();
        let w = weights[a];
        for r in 0..height {
            let y = (height as f64 / 2.0 - r as f64 - 0.5) * ps;
            for col in 0..width {
                let x = (col as f64 + 0.5 - width as f64 / 2.0) * ps;
                let pos = (x * c + y * s - origin) / d;
                let k0 = pos.floor();
                let frac = pos - k0;
                let k0 = k0 as i64;
                let sample = |k: i64| if k >= 0 && (k as usize) < nb { q[k as usize] } else { 0.0 };
                out[[r, col]] += w * ((1.0 - frac) * sample(k0) + frac * sample(k0 + 1));
            }
        }
    }
    Ok(out)
}

/// Angular quadrature weights (radians): half the gap to each neighbour,
/// wrapping around the 180° period. A wrap-around gap wider than twice the
/// typical spacing is coverage that was never acquired, so it is replaced by
/// the neighbouring interior gap.
fn view_weights(angles: &[f64]) -> Vec<f64> {
    let n = angles.len();
    if n == 1 {
        return vec![PI];
    }
    let gaps: Vec<f64> = angles.windows(2).map(|w| w[1] - w[0]).collect();
    let mut sorted = gaps.clone();
    sorted.sort_by(f64::total_cmp);
    let typical = sorted[sorted.len() / 2];
    let wrap = angles[0] + 180.0 - angles[n - 1];
    let (first, last) = if wrap > 2.0 * typical { (gaps[0], gaps[n - 2]) } else { (wrap, wrap) };
    (0..n)
        .map(|i| {
            let before = if i == 0 { first } else { gaps[i - 1] };
            let after = if i + 1 == n { last } else { gaps[i] };
            (0.5 * (before + after)).to_radians()
        })
        .collect()
}

/// SIRT iterates and their masked residual norms `‖S Ru − b‖`.
#[derive(Clone, Debug)]
pub struct SirtOutcome {
    pub u: Array2<f64>,
    pub residuals: Vec<f64>,
}

/// `u ← u + C Rᵀ W (b − S R u)` with inverse column and row sums.
pub fn sirt(op: &XrayTransform, mask: &SampleMask, b: &Array2<f64>, iters: usize) -> Result<SirtOutcome> {
    check_shape(op.sinogram_dim(), b.dim())?;
    check_shape(op.sinogram_dim(), mask.flags.dim())?;
    let s = mask.weights();
    let b = b * &s;
    let floor = 1e-8;
    let row = op.forward(&Array2::ones(op.image_dim()));
    let w = Array2::from_shape_fn(row.dim(), |idx| s[idx] / row[idx].max(floor));
    let col = op.adjoint(&s);
    let c = col.mapv(|v| 1.0 / v.max(floor));
    let mut u = Array2::<f64>::zeros(op.image_dim());
    let residual = |u: &Array2<f64>| {
        let r = &(&op.forward(u) * &s) - &b;
        (r.clone(), crate::field::norm(&r))
    };
    let (mut r, n0) = residual(&u);
    let mut residuals = vec![n0];
    for _ in 0..iters {
        let step = op.adjoint(&(&r * &w).mapv(|v| -v));
        u += &(&step * &c);
        let (r_new, n) = residual(&u);
        r = r_new;
        residuals.push(n);
    }
    Ok(SirtOutcome { u, residuals })
}

/// `argmin_{u ≥ 0} ½‖S Ru − b‖² + λ TV(u)`, from `u0`.
pub fn tv_reconstruct_from(
    op: &XrayTransform,
    op_norm: f64,
    mask: &SampleMask,
    b: &Array2<f64>,
    lambda: f64,
    u0: &Array2<f64>,
    opts: &PdhgOptions,
) -> Result<PdhgOutcome> {
    check_shape(op.sinogram_dim(), b.dim())?;
    check_shape(op.image_dim(), u0.dim())?;
    if !(lambda >= 0.0) {
        return Err(Error::Config(format!("TV weight must be non-negative, got {lambda}")));
    }
    let s = mask.weights();
    let center = b * &s;
    let mut blocks = vec![Block::new(Projection(op), DualTerm::Quadratic { weight: s, center }).with_norm(op_norm)];
    if lambda > 0.0 {
        blocks.push(
            Block::new(TensorGradient { tensor: None }, DualTerm::GroupNorm { beta: lambda, shift: None })
                .with_norm(GRAD_NORM),
        );
    }
    let problem = PdhgProblem {
        primal: PrimalTerm {
            weight: Array2::zeros(u0.dim()),
            center: u0.clone(),
            nonnegative: true,
        },
        blocks,
        constant: 0.0,
    };
    problem.solve(u0, opts)
}

/// [`tv_reconstruct_from`] started at zero with a fixed iteration budget.
pub fn tv_reconstruct(
    op: &XrayTransform,
    mask: &SampleMask,
    b: &Array2<f64>,
    lambda: f64,
    iters: usize,
) -> Result<Array2<f64>> {
    let opts = PdhgOptions {
        max_iters: iters,
        tol: 0.0,
        ..Default::default()
    };
    let u0 = Array2::zeros(op.image_dim());
    Ok(tv_reconstruct_from(op, op.norm_estimate(30), mask, b, lambda, &u0, &opts)?.x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::norm;
    use crate::metrics::psnr;
    use crate::phantoms::two_rings;
    use crate::regularizers::tv;
    use crate::tomo::{make_limited_angle_mask, wedge_angles, ProjectionGeometry};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(n: usize, views: usize) -> (XrayTransform, Array2<f64>) {
        let h = 2.0 / n as f64;
        let det = ProjectionGeometry::default_detector_count(n, n);
        let g = ProjectionGeometry::uniform(views, 0.0, 180.0 / views as f64, det, h).unwrap();
        let op = XrayTransform::new(g, n, n, h).unwrap();
        (op, two_rings(n).values)
    }

    #[test]
    fn fbp_full_angle_rings() {
        // Half-pixel detector bins: at one bin per pixel the projections of
        // the pixelated rings alias and Hann-apodized FBP loses ~6 dB.
        let n = 64;
        let h = 2.0 / n as f64;
        let det = 2 * ProjectionGeometry::default_detector_count(n, n);
        let g = ProjectionGeometry::uniform(180, 0.0, 1.0, det, h / 2.0).unwrap();
        let op = XrayTransform::new(g, n, n, h).unwrap();
        let phantom = two_rings(n).values;
        let b = op.forward(&phantom);
        let mask = SampleMask::full(op.geometry().clone());
        let u = fbp(&op, &mask, &b, RampWindow::Hann).unwrap();
        let full = psnr(&u, &phantom);
        assert!(full >= 25.0, "{full}");

        let wedge = make_limited_angle_mask(op.geometry(), &wedge_angles(op.geometry(), 0.0, 60.0)).unwrap();
        let limited = psnr(&fbp(&op, &wedge, &b, RampWindow::Hann).unwrap(), &phantom);
        assert!(limited <= full - 5.0, "{limited} vs {full}");
    }

    #[test]
    fn fbp_of_zero_is_zero() {
        let (op, _) = setup(16, 30);
        let mask = SampleMask::full(op.geometry().clone());
        let u = fbp(&op, &mask, &Array2::zeros(op.sinogram_dim()), RampWindow::RamLak).unwrap();
        assert!(u.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sirt_converges_monotonically() {
        let (op, phantom) = setup(32, 60);
        let mask = SampleMask::full(op.geometry().clone());
        let b = op.forward(&phantom);
        let out = sirt(&op, &mask, &b, 0).unwrap();
        assert!(out.u.iter().all(|&v| v == 0.0));
        let out = sirt(&op, &mask, &b, 300).unwrap();
        assert!(out.residuals.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
        let last = *out.residuals.last().unwrap();
        assert!(last <= 0.01 * norm(&b), "{last} vs {}", norm(&b));
    }

    #[test]
    fn sirt_monotone_on_random_consistent_data() {
        let (op, _) = setup(16, 20);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let truth = Array2::from_shape_fn(op.image_dim(), |_| rng.random_range(0.0..1.0));
        let b = op.forward(&truth);
        let mask = make_limited_angle_mask(op.geometry(), &wedge_angles(op.geometry(), 0.0, 90.0)).unwrap();
        let out = sirt(&op, &mask, &b, 100).unwrap();
        assert!(out.residuals.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
    }

    #[test]
    fn tv_without_regularization_fits_the_data() {
        let (op, phantom) = setup(16, 30);
        let mask = SampleMask::full(op.geometry().clone());
        let b = op.forward(&phantom);
        let opts = PdhgOptions {
            max_iters: 5000,
            tol: 0.0,
            ..Default::default()
        };
        let out =
            tv_reconstruct_from(&op, op.norm_estimate(30), &mask, &b, 0.0, &Array2::zeros(op.image_dim()), &opts).unwrap();
        let res = norm(&(&op.forward(&out.x) - &b)) / norm(&b);
        assert!(res <= 1e-3, "{res}");
    }

    #[test]
    fn huge_tv_weight_flattens() {
        let (op, phantom) = setup(16, 30);
        let mask = SampleMask::full(op.geometry().clone());
        let b = op.forward(&phantom);
        let u = tv_reconstruct(&op, &mask, &b, 1e6, 2000).unwrap();
        assert!(tv(&u) <= 1e-6 * tv(&phantom), "{}", tv(&u));
    }
}
