use ndarray::{Array2, Zip};

use super::{grad, GaussianKernel};
use crate::error::{Error, Result};

/// Per-pixel symmetric 2×2 matrices `[[m11, m12], [m12, m22]]`.
///
/// Index 1 is the `x` (column) axis, index 2 the `y` (row) axis. When a
/// tensor field is paired with another one, the pairing is component-wise:
/// `Σ a11 b11 + a12 b12 + a22 b22`.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorField {
    pub m11: Array2<f64>,
    pub m12: Array2<f64>,
    pub m22: Array2<f64>,
}

impl TensorField {
    pub fn zeros(dim: (usize, usize)) -> Self {
        Self {
            m11: Array2::zeros(dim),
            m12: Array2::zeros(dim),
            m22: Array2::zeros(dim),
        }
    }

    pub fn scaled_identity(dim: (usize, usize), scale: f64) -> Self {
        Self {
            m11: Array2::from_elem(dim, scale),
            m12: Array2::zeros(dim),
            m22: Array2::from_elem(dim, scale),
        }
    }

    /// `c1 e1 e1ᵀ + c2 e2 e2ᵀ` from per-pixel weights and unit `e1`, with
    /// `e2` the 90° rotation of `e1`.
    pub fn from_frame(c1: &Array2<f64>, c2: &Array2<f64>, e1x: &Array2<f64>, e1y: &Array2<f64>) -> Self {
        let mut t = Self::zeros(c1.dim());
        Zip::indexed(&mut t.m11)
            .and(&mut t.m12)
            .and(&mut t.m22)
            .for_each(|idx, m11, m12, m22| {
                let (a, b, x, y) = (c1[idx], c2[idx], e1x[idx], e1y[idx]);
                let (ex, ey) = (-y, x);
                *m11 = a * x * x + b * ex * ex;
                *m12 = a * x * y + b * ex * ey;
                *m22 = a * y * y + b * ey * ey;
            });
        t
    }

    pub fn dim(&self) -> (usize, usize) {
        self.m11.dim()
    }

    pub fn get(&self, idx: (usize, usize)) -> [f64; 3] {
        [self.m11[idx], self.m12[idx], self.m22[idx]]
    }

    pub fn set(&mut self, idx: (usize, usize), m: [f64; 3]) {
        self.m11[idx] = m[0];
        self.m12[idx] = m[1];
        self.m22[idx] = m[2];
    }

    pub fn dot(&self, other: &Self) -> f64 {
        crate::field::dot(&self.m11, &other.m11)
            + crate::field::dot(&self.m12, &other.m12)
            + crate::field::dot(&self.m22, &other.m22)
    }

    /// Largest per-pixel Frobenius norm.
    pub fn max_frobenius(&self) -> f64 {
        let mut best: f64 = 0.0;
        Zip::from(&self.m11)
            .and(&self.m12)
            .and(&self.m22)
            .for_each(|&a, &b, &c| best = best.max((a * a + 2.0 * b * b + c * c).sqrt()));
        best
    }

    /// Frobenius distance summed over pixels, `sqrt(Σ |A - B|_F²)`.
    pub fn frobenius_distance(&self, other: &Self) -> f64 {
        let d11 = crate::field::dist_sq(&self.m11, &other.m11);
        let d12 = crate::field::dist_sq(&self.m12, &other.m12);
        let d22 = crate::field::dist_sq(&self.m22, &other.m22);
        (d11 + 2.0 * d12 + d22).sqrt()
    }

    pub fn map_pixels(&self, mut f: impl FnMut([f64; 3]) -> [f64; 3]) -> Self {
        let mut out = Self::zeros(self.dim());
        Zip::from(&mut out.m11)
            .and(&mut out.m12)
            .and(&mut out.m22)
            .and(&self.m11)
            .and(&self.m12)
            .and(&self.m22)
            .for_each(|o11, o12, o22, &a, &b, &c| {
                let [x, y, z] = f([a, b, c]);
                *o11 = x;
                *o12 = y;
                *o22 = z;
            });
        out
    }

    pub fn blur(&self, kernel: &GaussianKernel) -> Self {
        Self {
            m11: kernel.apply(&self.m11),
            m12: kernel.apply(&self.m12),
            m22: kernel.apply(&self.m22),
        }
    }

    pub fn blur_adjoint(&self, kernel: &GaussianKernel) -> Self {
        Self {
            m11: kernel.apply_adjoint(&self.m11),
            m12: kernel.apply_adjoint(&self.m12),
            m22: kernel.apply_adjoint(&self.m22),
        }
    }
}

/// Ordered eigen-decomposition of one symmetric 2×2 matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SymEig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub e1: [f64; 2],
    pub e2: [f64; 2],
}

impl SymEig {
    /// Coherence `λ1 - λ2`.
    pub fn coherence(&self) -> f64 {
        self.lambda1 - self.lambda2
    }

    /// Energy `λ1 + λ2`.
    pub fn energy(&self) -> f64 {
        self.lambda1 + self.lambda2
    }
}

/// Closed-form decomposition, `λ1 ≥ λ2`.
///
/// Two algebraically equal expressions exist for `e1`; each degenerates to
/// `0/0` on a different set of diagonal matrices, so the one with the larger
/// denominator is used. With `λ1 = λ2` the frame is `e1 = (1, 0)`.
pub fn eig_sym2(m11: f64, m12: f64, m22: f64) -> SymEig {
    let sum = m11 + m22;
    let diff = m11 - m22;
    let delta = (diff * diff + 4.0 * m12 * m12).sqrt();
    let lambda1 = 0.5 * (sum + delta);
    let lambda2 = 0.5 * (sum - delta);
    let e1 = if delta == 0.0 {
        [1.0, 0.0]
    } else {
        let (ax, ay) = (2.0 * m12, delta - diff);
        let (bx, by) = (delta + diff, 2.0 * m12);
        let na = ax.hypot(ay);
        let nb = bx.hypot(by);
        if na >= nb {
            [ax / na, ay / na]
        } else {
            [bx / nb, by / nb]
        }
    };
    SymEig {
        lambda1,
        lambda2,
        e1,
        e2: [-e1[1], e1[0]],
    }
}

/// Per-pixel eigenvalues and unit eigenvectors of a tensor field.
#[derive(Clone, Debug)]
pub struct EigenField {
    pub lambda1: Array2<f64>,
    pub lambda2: Array2<f64>,
    pub e1: [Array2<f64>; 2],
    pub e2: [Array2<f64>; 2],
}

impl EigenField {
    pub fn coherence(&self) -> Array2<f64> {
        &self.lambda1 - &self.lambda2
    }

    pub fn energy(&self) -> Array2<f64> {
        &self.lambda1 + &self.lambda2
    }
}

pub fn eig2x2(m: &TensorField) -> EigenField {
    let dim = m.dim();
    let mut out = EigenField {
        lambda1: Array2::zeros(dim),
        lambda2: Array2::zeros(dim),
        e1: [Array2::zeros(dim), Array2::zeros(dim)],
        e2: [Array2::zeros(dim), Array2::zeros(dim)],
    };
    for ((i, j), &m11) in m.m11.indexed_iter() {
        let e = eig_sym2(m11, m.m12[[i, j]], m.m22[[i, j]]);
        out.lambda1[[i, j]] = e.lambda1;
        out.lambda2[[i, j]] = e.lambda2;
        out.e1[0][[i, j]] = e.e1[0];
        out.e1[1][[i, j]] = e.e1[1];
        out.e2[0][[i, j]] = e.e2[0];
        out.e2[1][[i, j]] = e.e2[1];
    }
    out
}

/// `(∇d_ρ ∇d_ρᵀ)_σ`: outer product of the gradient of the `ρ`-smoothed
/// field, smoothed again at scale `σ`.
pub fn structure_tensor(d: &Array2<f64>, rho: f64, sigma: f64) -> Result<TensorField> {
    if !(rho > 0.0) {
        return Err(Error::Config(format!("rho must be positive, got {rho}")));
    }
    if !(sigma >= 0.0) {
        return Err(Error::Config(format!("sigma must be non-negative, got {sigma}")));
    }
    let g = grad(&GaussianKernel::new(rho).apply(d));
    let outer = TensorField {
        m11: &g.x * &g.x,
        m12: &g.x * &g.y,
        m22: &g.y * &g.y,
    };
    Ok(outer.blur(&GaussianKernel::new(sigma)))
}
