use ndarray::{Array2, Zip};

use super::TensorField;

/// A discrete gradient: `x` differences along columns, `y` along rows.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientField {
    pub x: Array2<f64>,
    pub y: Array2<f64>,
}

impl GradientField {
    pub fn zeros(dim: (usize, usize)) -> Self {
        Self {
            x: Array2::zeros(dim),
            y: Array2::zeros(dim),
        }
    }

    pub fn dim(&self) -> (usize, usize) {
        self.x.dim()
    }

    /// `Σ |g(p)|₂`, the mixed 2,1 norm.
    pub fn norm21(&self) -> f64 {
        Zip::from(&self.x)
            .and(&self.y)
            .fold(0.0, |acc, &a, &b| acc + a.hypot(b))
    }

    pub fn dot(&self, other: &Self) -> f64 {
        crate::field::dot(&self.x, &other.x) + crate::field::dot(&self.y, &other.y)
    }

    /// Pointwise `A(p) g(p)` for a symmetric tensor field.
    pub fn apply_tensor(&self, a: &TensorField) -> Self {
        let mut out = Self::zeros(self.dim());
        Zip::indexed(&mut out.x).and(&mut out.y).for_each(|idx, ox, oy| {
            let (gx, gy) = (self.x[idx], self.y[idx]);
            *ox = a.m11[idx] * gx + a.m12[idx] * gy;
            *oy = a.m12[idx] * gx + a.m22[idx] * gy;
        });
        out
    }
}

/// Forward differences; the last difference along each axis is zero
/// (replicate boundary).
pub fn grad(f: &Array2<f64>) -> GradientField {
    let (rows, cols) = f.dim();
    let mut g = GradientField::zeros((rows, cols));
    for i in 0..rows {
        for j in 0..cols {
            let v = f[[i, j]];
            if j + 1 < cols {
                g.x[[i, j]] = f[[i, j + 1]] - v;
            }
            if i + 1 < rows {
                g.y[[i, j]] = f[[i + 1, j]] - v;
            }
        }
    }
    g
}

/// Discrete divergence, the negative adjoint of [`grad`].
pub fn div(g: &GradientField) -> Array2<f64> {
    let (rows, cols) = g.dim();
    let mut out = Array2::zeros((rows, cols));
    for i in 0..rows {
        for j in 0..cols {
            let mut acc = 0.0;
            if j + 1 < cols {
                acc += g.x[[i, j]];
            }
            if j > 0 {
                acc -= g.x[[i, j - 1]];
            }
            if i + 1 < rows {
                acc += g.y[[i, j]];
            }
            if i > 0 {
                acc -= g.y[[i - 1, j]];
            }
            out[[i, j]] = acc;
        }
    }
    out
}

/// Isotropic total variation `Σ |∇f|₂`.
pub fn tv(f: &Array2<f64>) -> f64 {
    grad(f).norm21()
}

/// Directional total variation `Σ |A ∇v|₂`.
pub fn dtv(v: &Array2<f64>, a: &TensorField) -> f64 {
    grad(v).apply_tensor(a).norm21()
}
