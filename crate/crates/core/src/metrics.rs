//! Image quality measures and the two-level thresholding used for
//! segmentation comparisons.

use ndarray::Array2;

use crate::field::{dist_sq, max_value, min_value};

/// Peak signal-to-noise ratio in dB with peak `max(ref)`; identical inputs
/// give `+∞`.
pub fn psnr(x: &Array2<f64>, reference: &Array2<f64>) -> f64 {
    assert_eq!(x.dim(), reference.dim(), "psnr: shape mismatch");
    let mse = dist_sq(x, reference) / x.len() as f64;
    if mse == 0.0 {
        return f64::INFINITY;
    }
    let peak = max_value(reference);
    10.0 * (peak * peak / mse).log10()
}

const SSIM_WINDOW: usize = 8;
const SSIM_SIGMA: f64 = 1.5;

fn ssim_window(size: usize) -> Array2<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let w = Array2::from_shape_fn((size, size), |(i, j)| {
        let (di, dj) = (i as f64 - c, j as f64 - c);
        (-(di * di + dj * dj) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
    });
    let s = w.sum();
    w / s
}

/// Mean structural similarity over all `8×8` Gaussian-weighted windows
/// (`σ = 1.5`, `K₁ = 0.01`, `K₂ = 0.03`), dynamic range `max(ref) − min(ref)`.
pub fn ssim(x: &Array2<f64>, reference: &Array2<f64>) -> f64 {
    assert_eq!(x.dim(), reference.dim(), "ssim: shape mismatch");
    let (h, w) = x.dim();
    let range = max_value(reference) - min_value(reference);
    let l = if range > 0.0 { range } else { 1.0 };
    let c1 = (0.01 * l).powi(2);
    let c2 = (0.03 * l).powi(2);
    let size = SSIM_WINDOW.min(h).min(w);
    let win = ssim_window(size);
    let mut total = 0.0;
    let mut count = 0usize;
    for r0 in 0..=h - size {
        for c0 in 0..=w - size {
            let (mut mx, mut my) = (0.0, 0.0);
            for i in 0..size {
                for j in 0..size {
                    let k = win[[i, j]];
                    mx += k * x[[r0 + i, c0 + j]];
                    my += k * reference[[r0 + i, c0 + j]];
                }
            }
            let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
            for i in 0..size {
                for j in 0..size {
                    let k = win[[i, j]];
                    let dx = x[[r0 + i, c0 + j]] - mx;
                    let dy = reference[[r0 + i, c0 + j]] - my;
                    vx += k * dx * dx;
                    vy += k * dy * dy;
                    cxy += k * dx * dy;
                }
            }
            total += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    total / count as f64
}

/// The two most populated intensity levels, as the means of the two
/// dominant histogram bins (at least an eighth of the range apart).
pub fn dominant_levels(x: &Array2<f64>) -> (f64, f64) {
    const BINS: usize = 64;
    let (lo, hi) = (min_value(x), max_value(x));
    if hi <= lo {
        return (lo, hi);
    }
    let bin = |v: f64| (((v - lo) / (hi - lo) * BINS as f64) as usize).min(BINS - 1);
    let mut count = [0usize; BINS];
    let mut sum = [0.0f64; BINS];
    for &v in x {
        let b = bin(v);
        count[b] += 1;
        sum[b] += v;
    }
    let first = (0..BINS).max_by_key(|&b| (count[b], std::cmp::Reverse(b))).unwrap();
    let second = (0..BINS)
        .filter(|&b| b.abs_diff(first) >= BINS / 8 && count[b] > 0)
        .max_by_key(|&b| (count[b], std::cmp::Reverse(b)))
        .unwrap_or(if first < BINS / 2 { BINS - 1 } else { 0 });
    let mean = |b: usize| if count[b] > 0 { sum[b] / count[b] as f64 } else { lo + (b as f64 + 0.5) * (hi - lo) / BINS as f64 };
    let (a, b) = (mean(first), mean(second));
    (a.min(b), a.max(b))
}

/// Midpoint of the two dominant levels.
pub fn threshold_level(x: &Array2<f64>) -> f64 {
    let (a, b) = dominant_levels(x);
    0.5 * (a + b)
}

/// Binary `0/1` segmentation at [`threshold_level`].
pub fn threshold(x: &Array2<f64>) -> Array2<f64> {
    let t = threshold_level(x);
    x.mapv(|v| if v > t { 1.0 } else { 0.0 })
}

/// `Σ (∂_row u)² / Σ (∂_col u)²`: how strongly intensity varies down the
/// image relative to across it. The missing wedge around the vertical
/// direction suppresses the numerator.
pub fn anisotropy_ratio(u: &Array2<f64>) -> f64 {
    let g = crate::regularizers::grad(u);
    let vertical: f64 = g.y.iter().map(|v| v * v).sum();
    let horizontal: f64 = g.x.iter().map(|v| v * v).sum();
    vertical / horizontal.max(1e-300)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_inputs() {
        let a = Array2::from_shape_fn((12, 12), |(i, j)| ((i * j) % 5) as f64 / 4.0);
        assert_eq!(psnr(&a, &a), f64::INFINITY);
        assert!((ssim(&a, &a) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_offset_is_twenty_db() {
        let a = Array2::from_shape_fn((10, 10), |(i, j)| if (i + j) % 2 == 0 { 1.0 } else { 0.0 });
        let b = &a + 0.1;
        assert!((psnr(&b, &a) - 20.0).abs() < 1e-12);
    }

    #[test]
    fn inverted_checkerboard_is_anticorrelated() {
        let a = Array2::from_shape_fn((16, 16), |(i, j)| ((i + j) % 2) as f64);
        let b = a.mapv(|v| 1.0 - v);
        let s = ssim(&b, &a);
        assert!(s <= 0.0 && s >= -1.0, "{s}");
    }

    #[test]
    fn thresholding_is_idempotent() {
        let a = Array2::from_shape_fn((20, 20), |(i, j)| {
            let base = if (i as f64 - 10.0).hypot(j as f64 - 10.0) < 6.0 { 0.9 } else { 0.1 };
            base + 0.02 * (((i * 7 + j * 3) % 5) as f64 - 2.0)
        });
        let t = threshold(&a);
        assert!(t.iter().any(|&v| v == 1.0) && t.iter().any(|&v| v == 0.0));
        assert_eq!(threshold(&t), t);
        assert!((threshold_level(&a) - 0.5).abs() < 0.1);
    }

    proptest! {
        #[test]
        fn ssim_is_bounded_and_symmetric_psnr(
            vals in proptest::collection::vec(0.0f64..1.0, 100),
            noise in proptest::collection::vec(-0.3f64..0.3, 100),
        ) {
            let a = Array2::from_shape_vec((10, 10), vals).unwrap();
            let n = Array2::from_shape_vec((10, 10), noise).unwrap();
            let b = &a + &n;
            let s = ssim(&b, &a);
            prop_assert!((-1.0..=1.0 + 1e-12).contains(&s));
            prop_assert_eq!(psnr(&a, &a), f64::INFINITY);
        }
    }
}
