//! Numerical criticality: the metric slope of a function and the
//! supporting-quadratic (cone) bound at a limit point.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

/// Sampling plan for [`slope`].
#[derive(Clone, Debug, PartialEq)]
pub struct SlopeOptions {
    /// Decreasing probe radii.
    pub radii: Vec<f64>,
    pub random_directions: usize,
    /// Also probe `±` each coordinate axis when the dimension is at most
    /// this.
    pub max_axis_dim: usize,
    pub seed: u64,
}

impl Default for SlopeOptions {
    fn default() -> Self {
        Self {
            radii: vec![1e-1, 1e-2, 1e-3, 1e-4, 1e-5],
            random_directions: 64,
            max_axis_dim: 256,
            seed: 0x5eed,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SlopeEstimate {
    pub value: f64,
    /// Radius the value was read at.
    pub radius: f64,
    /// Best difference quotient at each radius.
    pub quotients: Vec<f64>,
}

/// Unit probe directions: seeded Gaussian samples, then the `±` axes.
pub fn probe_directions(dim: usize, opts: &SlopeOptions) -> Vec<Vec<f64>> {
    let mut rng = ChaCha20Rng::seed_from_u64(opts.seed);
    let mut dirs = Vec::new();
    for _ in 0..opts.random_directions {
        let mut d: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let n = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 0.0 {
            d.iter_mut().for_each(|v| *v /= n);
            dirs.push(d);
        }
    }
    if dim <= opts.max_axis_dim {
        for i in 0..dim {
            for s in [1.0, -1.0] {
                let mut d = vec![0.0; dim];
                d[i] = s;
                dirs.push(d);
            }
        }
    }
    dirs
}

/// Estimates `|∂F|(x) = limsup max(0, F(x) − F(x'))/‖x' − x‖`.
///
/// For each radius the largest positive difference quotient over all probe
/// directions is taken. Radii are walked from large to small and the
/// estimate is read at the smallest radius before the quotient jumps by more
/// than 2× (round-off amplification).
pub fn slope(f: impl Fn(&[f64]) -> f64, x: &[f64], opts: &SlopeOptions) -> SlopeEstimate {
    let fx = f(x);
    let dirs = probe_directions(x.len(), opts);
    let mut probe = x.to_vec();
    let quotients: Vec<f64> = opts
        .radii
        .iter()
        .map(|&r| {
            dirs.iter()
                .map(|d| {
                    for ((p, &xi), &di) in probe.iter_mut().zip(x).zip(d) {
                        *p = xi + r * di;
                    }
                    let drop = fx - f(&probe);
                    if drop.is_finite() {
                        (drop / r).max(0.0)
                    } else {
                        0.0
                    }
                })
                .fold(0.0, f64::max)
        })
        .collect();
    let mut value = quotients.first().copied().unwrap_or(0.0);
    let mut radius = opts.radii.first().copied().unwrap_or(0.0);
    for (q, &r) in quotients.iter().zip(&opts.radii).skip(1) {
        if *q <= 2.0 * value + 1e-12 {
            value = *q;
            radius = r;
        } else {
            break;
        }
    }
    SlopeEstimate {
        value,
        radius,
        quotients,
    }
}

/// Outcome of [`cone_bound_check`].
#[derive(Clone, Debug, PartialEq)]
pub struct ConeReport {
    /// `min over samples of E(x) + 2τ‖x − x*‖² − E*`.
    pub worst_margin: f64,
    pub slack: f64,
    pub samples: usize,
    pub violations: usize,
}

impl ConeReport {
    pub fn holds(&self) -> bool {
        self.violations == 0
    }
}

/// Samples `x = x* + r·d` (projected by `project`) and checks
/// `E(x*) ≤ E(x) + 2τ‖x − x*‖²` with slack `1e-6 |E*|`.
pub fn cone_bound_check(
    e: impl Fn(&[f64]) -> f64,
    x_star: &[f64],
    tau: f64,
    samples: usize,
    radius: f64,
    seed: u64,
    project: impl Fn(&mut [f64]),
) -> ConeReport {
    let e_star = e(x_star);
    let slack = 1e-6 * e_star.abs();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut violations = 0;
    let mut x = x_star.to_vec();
    for _ in 0..samples {
        let d: Vec<f64> = (0..x_star.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
        let n = d.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
        for ((xi, &s), &di) in x.iter_mut().zip(x_star).zip(&d) {
            *xi = s + radius * di / n;
        }
        project(&mut x);
        let dist2: f64 = x.iter().zip(x_star).map(|(a, b)| (a - b) * (a - b)).sum();
        let margin = e(&x) + 2.0 * tau * dist2 - e_star;
        worst = worst.min(margin);
        if margin < -slack {
            violations += 1;
        }
    }
    ConeReport {
        worst_margin: worst,
        slack,
        samples,
        violations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn norm(x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    #[test]
    fn slope_of_negative_norm_is_one() {
        let s = slope(|x| -norm(x), &[0.0, 0.0, 0.0], &SlopeOptions::default());
        assert!((s.value - 1.0).abs() <= 0.01, "{s:?}");
    }

    #[test]
    fn slope_of_smooth_minimum_is_zero() {
        let s = slope(|x| norm(x).powi(2), &[0.0, 0.0], &SlopeOptions::default());
        assert!(s.value <= 1e-3);
    }

    #[test]
    fn slope_of_convex_kink_is_zero() {
        let s = slope(norm, &[0.0, 0.0], &SlopeOptions::default());
        assert_eq!(s.value, 0.0);
    }

    #[test]
    fn slope_of_linear_function_is_gradient_norm() {
        // Finitely many directions can only underestimate.
        let s = slope(|x| 3.0 * x[0] - 4.0 * x[1], &[1.0, 2.0], &SlopeOptions::default());
        assert!(s.value <= 5.0 + 1e-9 && s.value >= 5.0 * (1.0 - 1e-3), "{s:?}");
    }

    #[test]
    fn infeasible_probes_do_not_count() {
        // F(x) = x on x ≥ 0: at 0 the only descent leaves the domain.
        let f = |x: &[f64]| if x[0] < 0.0 { f64::INFINITY } else { x[0] };
        assert_eq!(slope(f, &[0.0], &SlopeOptions::default()).value, 0.0);
    }

    #[test]
    fn cone_is_tight_at_the_point_itself() {
        let r = cone_bound_check(|x| x[0] * x[0], &[0.3], 1.0, 10, 0.0, 1, |_| {});
        assert_eq!(r.worst_margin, 0.0);
        assert!(r.holds());
    }

    #[test]
    fn cone_detects_a_non_minimum() {
        // -x² at 0 with τ = 0: every probe lies below.
        let r = cone_bound_check(|x| -x[0] * x[0], &[0.0], 0.0, 20, 0.1, 2, |_| {});
        assert_eq!(r.violations, 20);
        // A wide enough quadratic restores the bound.
        assert!(cone_bound_check(|x| -x[0] * x[0], &[0.0], 1.0, 20, 0.1, 2, |_| {}).holds());
    }
}
