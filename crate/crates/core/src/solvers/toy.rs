//! The two-axis example `E(x, y) = max(x, y) + x² + y²`, whose alternating
//! proximal minimization can stall at a point that is critical along each
//! axis but not jointly.

/// `max(x, y) + x² + y²`.
pub fn toy_energy(x: f64, y: f64) -> f64 {
    x.max(y) + x * x + y * y
}

/// Exact `argmin_s max(s, t) + s² + τ (s − a)²`.
///
/// The objective is convex and piecewise quadratic; the minimizer is the
/// stationary point of whichever branch contains it, or the kink `s = t`.
pub fn toy_axis_min(t: f64, a: f64, tau: f64) -> f64 {
    let upper = (2.0 * tau * a - 1.0) / (2.0 + 2.0 * tau);
    if upper >= t {
        return upper;
    }
    let lower = tau * a / (1.0 + tau);
    if lower <= t {
        return lower;
    }
    t
}

#[derive(Clone, Debug, PartialEq)]
pub struct ToyState {
    pub x: f64,
    pub y: f64,
    /// `(x_n, y_n)` for `n = 0..=iters`.
    pub trace: Vec<(f64, f64)>,
}

/// Alternating exact minimization with proximal weights `τx`, `τy`.
pub fn run_toy_2axis(x0: f64, y0: f64, tau_x: f64, tau_y: f64, iters: usize) -> ToyState {
    let (mut x, mut y) = (x0, y0);
    let mut trace = Vec::with_capacity(iters + 1);
    trace.push((x, y));
    for _ in 0..iters {
        x = toy_axis_min(y, x, tau_x);
        y = toy_axis_min(x, y, tau_y);
        trace.push((x, y));
    }
    ToyState { x, y, trace }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::criticality::{cone_bound_check, slope, SlopeOptions};

    fn brute_axis_min(t: f64, a: f64, tau: f64) -> f64 {
        let obj = |s: f64| s.max(t) + s * s + tau * (s - a) * (s - a);
        let mut best = (f64::INFINITY, 0.0);
        for k in 0..=400_000 {
            let s = -2.0 + 4.0 * k as f64 / 400_000.0;
            let v = obj(s);
            if v < best.0 {
                best = (v, s);
            }
        }
        best.1
    }

    #[test]
    fn axis_minimizer_matches_grid_search() {
        for &(t, a, tau) in &[(0.0, 0.0, 1.0), (-1.0, -1.0, 1.0), (0.3, -0.2, 0.5), (-0.6, 0.4, 2.0), (-0.25, -0.25, 0.1)] {
            let exact = toy_axis_min(t, a, tau);
            assert!((exact - brute_axis_min(t, a, tau)).abs() < 2e-5, "{t} {a} {tau}");
        }
    }

    #[test]
    fn origin_is_a_fixed_point() {
        let s = run_toy_2axis(0.0, 0.0, 1.0, 1.0, 1000);
        assert!(s.trace.iter().all(|&p| p == (0.0, 0.0)));
    }

    #[test]
    fn converges_from_minus_one() {
        let s = run_toy_2axis(-1.0, -1.0, 1.0, 1.0, 200);
        assert!((s.x + 0.5).abs() <= 1e-6 && (s.y + 0.5).abs() <= 1e-6, "{:?}", (s.x, s.y));
    }

    #[test]
    fn the_true_critical_point_is_minus_a_quarter() {
        let opts = SlopeOptions::default();
        let e = |p: &[f64]| toy_energy(p[0], p[1]);
        assert!(slope(e, &[-0.25, -0.25], &opts).value <= 1e-3);
        // The iteration's limit from (−1, −1) is not jointly critical…
        assert!(slope(e, &[-0.5, -0.5], &opts).value > 0.1);
        // …nor is the origin, although each axis is.
        assert!(slope(e, &[0.0, 0.0], &opts).value > 0.5);
        assert!(slope(|p: &[f64]| toy_energy(p[0], 0.0), &[0.0], &opts).value <= 1e-3);
        assert!(slope(|p: &[f64]| toy_energy(0.0, p[0]), &[0.0], &opts).value <= 1e-3);
        assert!(slope(|p: &[f64]| toy_energy(p[0], -0.5), &[-0.5], &opts).value <= 1e-3);
    }

    #[test]
    fn cone_bound_at_toy_limits() {
        for start in [(0.0, 0.0), (-1.0, -1.0)] {
            let s = run_toy_2axis(start.0, start.1, 1.0, 1.0, 200);
            let y = s.y;
            let r = cone_bound_check(|p: &[f64]| toy_energy(p[0], y), &[s.x], 1.0, 100, 1e-2, 3, |_| {});
            assert!(r.holds(), "{r:?}");
        }
    }
}
