//! Small numeric helpers over dense 2D fields.

use ndarray::Array2;

pub fn dot(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    debug_assert_eq!(a.dim(), b.dim());
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(a: &Array2<f64>) -> f64 {
    a.iter().map(|x| x * x).sum()
}

pub fn norm(a: &Array2<f64>) -> f64 {
    norm_sq(a).sqrt()
}

pub fn dist_sq(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    debug_assert_eq!(a.dim(), b.dim());
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn max_value(a: &Array2<f64>) -> f64 {
    a.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

pub fn min_value(a: &Array2<f64>) -> f64 {
    a.iter().copied().fold(f64::INFINITY, f64::min)
}

pub fn all_finite(a: &Array2<f64>) -> bool {
    a.iter().all(|x| x.is_finite())
}
