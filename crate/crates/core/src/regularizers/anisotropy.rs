//! The anisotropy tensor `A_d = c1 e1 e1ᵀ + c2 e2 e2ᵀ` built from the
//! structure tensor of `d`, and its derivative with respect to `d`.
//!
//! The weights depend on the structure tensor only through its energy
//! `Σ = λ1 + λ2` and squared coherence `Δ² = (λ1 - λ2)²`. Writing
//! `s = (c1 + c2) / 2` and `g = (c1 - c2) / Δ²`, the tensor has the
//! eigenvector-free form
//!
//! ```text
//! A = s I + (g Δ / 2) P,    P = [[m11 - m22, 2 m12], [2 m12, m22 - m11]]
//! ```
//!
//! which stays differentiable through eigenvalue crossings as long as `g`
//! is smooth, i.e. `c1 - c2 = O(Δ²)`. [`anisotropy_tensor`] evaluates the
//! eigen route, the derivative uses the smooth form; tests check the two
//! agree.

use ndarray::{Array2, Zip};

use super::{div, grad, structure_tensor, GaussianKernel, GradientField, TensorField};
use super::tensor::eig_sym2;
use crate::error::{Error, Result};

/// `s`, `g` and their partials in `(Δ², Σ)`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SmoothParts {
    pub s: f64,
    pub g: f64,
    pub ds_ddelta2: f64,
    pub ds_dsigma: f64,
    pub dg_ddelta2: f64,
    pub dg_dsigma: f64,
}

/// Eigenvalue weights `c1, c2` as functions of `(Δ², Σ)`.
pub trait CoherenceWeights {
    fn coefficients(&self, delta2: f64, energy: f64) -> (f64, f64);
    fn smooth_parts(&self, delta2: f64, energy: f64) -> SmoothParts;
}

/// `c1 = ε + tanh Σ / (1 + β₃ Δ²)`, `c2 = ε + tanh Σ`.
///
/// Both lie in `[ε, 1 + ε]` for `Σ ≥ 0`, coincide when `Δ = 0`, and
/// `c1 ≪ c2` on strong coherent edges.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TanhCoherence {
    pub beta3: f64,
    pub floor: f64,
}

impl TanhCoherence {
    pub fn new(beta3: f64) -> Self {
        Self { beta3, floor: 1e-6 }
    }
}

impl CoherenceWeights for TanhCoherence {
    fn coefficients(&self, delta2: f64, energy: f64) -> (f64, f64) {
        let t = energy.tanh();
        (
            self.floor + t / (1.0 + self.beta3 * delta2),
            self.floor + t,
        )
    }

    fn smooth_parts(&self, delta2: f64, energy: f64) -> SmoothParts {
        let t = energy.tanh();
        let dt = 1.0 - t * t;
        let q = 1.0 / (1.0 + self.beta3 * delta2);
        let dq = -self.beta3 * q * q;
        SmoothParts {
            s: self.floor + 0.5 * t * (1.0 + q),
            ds_ddelta2: 0.5 * t * dq,
            ds_dsigma: 0.5 * dt * (1.0 + q),
            // (c1 - c2) / Δ² = -t β₃ q
            g: -t * self.beta3 * q,
            dg_ddelta2: -t * self.beta3 * dq,
            dg_dsigma: -dt * self.beta3 * q,
        }
    }
}

/// `c1 = c2 = 1`: the tensor is the identity and DTV is plain TV.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Isotropic;

impl CoherenceWeights for Isotropic {
    fn coefficients(&self, _delta2: f64, _energy: f64) -> (f64, f64) {
        (1.0, 1.0)
    }

    fn smooth_parts(&self, _delta2: f64, _energy: f64) -> SmoothParts {
        SmoothParts {
            s: 1.0,
            ..Default::default()
        }
    }
}

/// `c1 c2` from the eigen decomposition of one structure-tensor value.
pub fn anisotropy_from_structure(m: [f64; 3], weights: &dyn CoherenceWeights) -> [f64; 3] {
    let e = eig_sym2(m[0], m[1], m[2]);
    let delta = e.coherence();
    let (c1, c2) = weights.coefficients(delta * delta, e.energy());
    let [x, y] = e.e1;
    let [u, v] = e.e2;
    [
        c1 * x * x + c2 * u * u,
        c1 * x * y + c2 * u * v,
        c1 * y * y + c2 * v * v,
    ]
}

/// The same tensor through the eigenvector-free form.
#[cfg(test)]
pub(crate) fn anisotropy_smooth(m: [f64; 3], weights: &dyn CoherenceWeights) -> [f64; 3] {
    let a = m[0] - m[2];
    let b = 2.0 * m[1];
    let delta2 = a * a + b * b;
    let delta = delta2.sqrt();
    let p = weights.smooth_parts(delta2, m[0] + m[2]);
    let k = 0.5 * p.g * delta;
    [p.s + k * a, k * b, p.s - k * a]
}

/// Row-major 3×3 Jacobian of `(m11, m12, m22) ↦ (a11, a12, a22)`.
pub(crate) fn anisotropy_jacobian(m: [f64; 3], weights: &dyn CoherenceWeights) -> [[f64; 3]; 3] {
    let a = m[0] - m[2];
    let b = 2.0 * m[1];
    let delta2 = a * a + b * b;
    let delta = delta2.sqrt();
    let p = weights.smooth_parts(delta2, m[0] + m[2]);
    let (ua, ub) = if delta > 0.0 { (a / delta, b / delta) } else { (0.0, 0.0) };

    let mut jac = [[0.0; 3]; 3];
    // Unit perturbations of m11, m12, m22 in turn.
    for (col, dm) in [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]].iter().enumerate() {
        let dsig = dm[0] + dm[2];
        let da = dm[0] - dm[2];
        let db = 2.0 * dm[1];
        let dd2 = 2.0 * (a * da + b * db);
        let ds = p.ds_ddelta2 * dd2 + p.ds_dsigma * dsig;
        let dg = p.dg_ddelta2 * dd2 + p.dg_dsigma * dsig;
        // d(Δ) = ua da + ub db; d(Δ a) = dΔ a + Δ da, likewise for b.
        let ddelta = ua * da + ub * db;
        let d_delta_a = ddelta * a + delta * da;
        let d_delta_b = ddelta * b + delta * db;
        let d11 = ds + 0.5 * (dg * delta * a + p.g * d_delta_a);
        let d12 = 0.5 * (dg * delta * b + p.g * d_delta_b);
        let d22 = ds - 0.5 * (dg * delta * a + p.g * d_delta_a);
        jac[0][col] = d11;
        jac[1][col] = d12;
        jac[2][col] = d22;
    }
    jac
}

/// Parameters of `d ↦ A_d` with the tanh-coherence weights.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnisotropyModel {
    pub rho: f64,
    pub sigma: f64,
    pub weights: TanhCoherence,
}

impl AnisotropyModel {
    pub fn new(rho: f64, sigma: f64, beta3: f64) -> Result<Self> {
        if !(rho > 0.0) {
            return Err(Error::Config(format!("rho must be positive, got {rho}")));
        }
        if !(sigma >= 0.0) {
            return Err(Error::Config(format!("sigma must be non-negative, got {sigma}")));
        }
        if !(beta3 >= 0.0) {
            return Err(Error::Config(format!("beta3 must be non-negative, got {beta3}")));
        }
        Ok(Self {
            rho,
            sigma,
            weights: TanhCoherence::new(beta3),
        })
    }

    pub fn tensor(&self, d: &Array2<f64>) -> TensorField {
        let m = structure_tensor(d, self.rho, self.sigma).expect("validated on construction");
        m.map_pixels(|px| anisotropy_from_structure(px, &self.weights))
    }

    pub fn linearize(&self, d: &Array2<f64>) -> AnisotropyLinearization {
        AnisotropyLinearization::new(d, self.rho, self.sigma, &self.weights)
    }
}

/// `A_d` with the tanh-coherence weights; `ρ ≤ 0` is rejected.
pub fn anisotropy_tensor(d: &Array2<f64>, rho: f64, sigma: f64, beta3: f64) -> Result<TensorField> {
    Ok(AnisotropyModel::new(rho, sigma, beta3)?.tensor(d))
}

/// Directional derivative `(d/dt) A_{d + t δd}` at `t = 0`.
pub fn danisotropy_dd(
    d: &Array2<f64>,
    direction: &Array2<f64>,
    rho: f64,
    sigma: f64,
    beta3: f64,
) -> Result<TensorField> {
    crate::error::check_shape(d.dim(), direction.dim())?;
    Ok(AnisotropyModel::new(rho, sigma, beta3)?
        .linearize(d)
        .apply(direction))
}

/// The linear map `δd ↦ dA_d[δd]` frozen at one `d`, with its adjoint.
///
/// Chain: `δd → blur_ρ → ∇ → (g hᵀ + h gᵀ) → blur_σ → per-pixel Jacobian`,
/// where `g = ∇ blur_ρ d`.
#[derive(Clone, Debug)]
pub struct AnisotropyLinearization {
    inner: GaussianKernel,
    outer: GaussianKernel,
    g: GradientField,
    jac: Vec<[[f64; 3]; 3]>,
    dim: (usize, usize),
}

impl AnisotropyLinearization {
    pub fn new(d: &Array2<f64>, rho: f64, sigma: f64, weights: &dyn CoherenceWeights) -> Self {
        let inner = GaussianKernel::new(rho);
        let outer = GaussianKernel::new(sigma);
        let g = grad(&inner.apply(d));
        let m = TensorField {
            m11: &g.x * &g.x,
            m12: &g.x * &g.y,
            m22: &g.y * &g.y,
        }
        .blur(&outer);
        let jac = m
            .m11
            .iter()
            .zip(m.m12.iter())
            .zip(m.m22.iter())
            .map(|((&a, &b), &c)| anisotropy_jacobian([a, b, c], weights))
            .collect();
        Self {
            inner,
            outer,
            g,
            jac,
            dim: d.dim(),
        }
    }

    pub fn dim(&self) -> (usize, usize) {
        self.dim
    }

    /// Derivative of the structure tensor in direction `delta`.
    fn structure_derivative(&self, delta: &Array2<f64>) -> TensorField {
        let h = grad(&self.inner.apply(delta));
        let mut dm = TensorField::zeros(self.dim);
        for (p, ((gx, gy), (hx, hy))) in self
            .g
            .x
            .iter()
            .zip(&self.g.y)
            .zip(h.x.iter().zip(&h.y))
            .enumerate()
        {
            let idx = (p / self.dim.1, p % self.dim.1);
            dm.m11[idx] = 2.0 * gx * hx;
            dm.m12[idx] = gx * hy + gy * hx;
            dm.m22[idx] = 2.0 * gy * hy;
        }
        dm.blur(&self.outer)
    }

    pub fn apply(&self, delta: &Array2<f64>) -> TensorField {
        let dm = self.structure_derivative(delta);
        let (d11, d12, d22) = (
            dm.m11.as_slice().unwrap(),
            dm.m12.as_slice().unwrap(),
            dm.m22.as_slice().unwrap(),
        );
        let mut out = TensorField::zeros(self.dim);
        for (row, plane) in [&mut out.m11, &mut out.m12, &mut out.m22].into_iter().enumerate() {
            let o = plane.as_slice_mut().unwrap();
            for (p, j) in self.jac.iter().enumerate() {
                o[p] = j[row][0] * d11[p] + j[row][1] * d12[p] + j[row][2] * d22[p];
            }
        }
        out
    }

    /// Adjoint under the component-wise tensor pairing.
    pub fn adjoint(&self, cot: &TensorField) -> Array2<f64> {
        let (q11, q12, q22) = (
            cot.m11.as_slice().unwrap(),
            cot.m12.as_slice().unwrap(),
            cot.m22.as_slice().unwrap(),
        );
        let mut qm = TensorField::zeros(self.dim);
        for (col, plane) in [&mut qm.m11, &mut qm.m12, &mut qm.m22].into_iter().enumerate() {
            let o = plane.as_slice_mut().unwrap();
            for (p, j) in self.jac.iter().enumerate() {
                o[p] = j[0][col] * q11[p] + j[1][col] * q12[p] + j[2][col] * q22[p];
            }
        }
        let r = qm.blur_adjoint(&self.outer);
        let mut h = GradientField::zeros(self.dim);
        Zip::indexed(&mut h.x).and(&mut h.y).for_each(|idx, hx, hy| {
            let (gx, gy) = (self.g.x[idx], self.g.y[idx]);
            *hx = 2.0 * gx * r.m11[idx] + gy * r.m12[idx];
            *hy = gx * r.m12[idx] + 2.0 * gy * r.m22[idx];
        });
        // gradᵀ = -div
        let back = div(&h).mapv(|v| -v);
        self.inner.apply_adjoint(&back)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(dim: (usize, usize), seed: u64, scale: f64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn(dim, |_| scale * rng.random_range(-1.0..1.0))
    }

    fn frob(a: [f64; 3], b: [f64; 3]) -> f64 {
        ((a[0] - b[0]).powi(2) + 2.0 * (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
    }

    #[test]
    fn constant_field_gives_floor_times_identity() {
        let d = Array2::from_elem((12, 12), 0.7);
        let a = anisotropy_tensor(&d, 1.0, 2.0, 1e10).unwrap();
        for ((i, j), &a11) in a.m11.indexed_iter() {
            assert_eq!(a11, 1e-6);
            assert_eq!(a.m12[[i, j]], 0.0);
            assert_eq!(a.m22[[i, j]], 1e-6);
        }
    }

    #[test]
    fn strong_edge_suppresses_normal_weight() {
        let w = TanhCoherence::new(1e10);
        // Pure x-gradient structure with energy 3.
        let a = anisotropy_from_structure([3.0, 0.0, 0.0], &w);
        let (c1, c2) = w.coefficients(9.0, 3.0);
        assert!((c1 - 1e-6).abs() < 1e-9);
        assert!((c2 - (1e-6 + 3f64.tanh())).abs() < 1e-15);
        assert!((a[0] - c1).abs() < 1e-15);
        assert!((a[2] - c2).abs() < 1e-15);
    }

    #[test]
    fn weights_bounded_and_ordered() {
        let w = TanhCoherence::new(5.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let d2 = rng.random_range(0.0..10.0);
            let e = rng.random_range(0.0..10.0);
            let (c1, c2) = w.coefficients(d2, e);
            assert!(c1 >= 1e-6 && c2 <= 1.0 + 1e-6 && c1 <= c2);
        }
    }

    #[test]
    fn smooth_form_matches_eigen_route() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let weights: [&dyn CoherenceWeights; 3] =
            [&TanhCoherence::new(1.0), &TanhCoherence::new(1e4), &Isotropic];
        for w in weights {
            for _ in 0..500 {
                let x: f64 = rng.random_range(-2.0..2.0);
                let y: f64 = rng.random_range(-2.0..2.0);
                let z: f64 = rng.random_range(0.0..1.0);
                // PSD structure-like matrix
                let m = [x * x + z, x * y, y * y + z];
                let e = anisotropy_from_structure(m, w);
                let s = anisotropy_smooth(m, w);
                assert!(frob(e, s) < 1e-12, "{e:?} vs {s:?}");
            }
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let w = TanhCoherence::new(3.0);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..200 {
            let m = [
                rng.random_range(0.0..1.0),
                rng.random_range(-0.5..0.5),
                rng.random_range(0.0..1.0),
            ];
            let jac = anisotropy_jacobian(m, &w);
            let h = 1e-6;
            for col in 0..3 {
                let mut mp = m;
                let mut mm = m;
                mp[col] += h;
                mm[col] -= h;
                let ap = anisotropy_smooth(mp, &w);
                let am = anisotropy_smooth(mm, &w);
                for row in 0..3 {
                    let fd = (ap[row] - am[row]) / (2.0 * h);
                    assert!((fd - jac[row][col]).abs() < 1e-6, "{row},{col}: {fd} vs {}", jac[row][col]);
                }
            }
        }
    }

    #[test]
    fn jacobian_at_repeated_eigenvalue_is_trace_only() {
        let w = TanhCoherence::new(7.0);
        let jac = anisotropy_jacobian([0.4, 0.0, 0.4], &w);
        let p = w.smooth_parts(0.0, 0.8);
        assert_eq!(jac[1], [0.0, 0.0, 0.0]);
        assert_eq!(jac[0], [p.ds_dsigma, 0.0, p.ds_dsigma]);
        assert_eq!(jac[2], [p.ds_dsigma, 0.0, p.ds_dsigma]);
    }

    #[test]
    fn zero_direction_gives_zero_derivative() {
        let d = random((10, 10), 1, 1.0);
        let da = danisotropy_dd(&d, &Array2::zeros((10, 10)), 1.0, 1.0, 10.0).unwrap();
        assert_eq!(da.max_frobenius(), 0.0);
    }

    #[test]
    fn linearization_adjoint_identity() {
        let d = random((14, 11), 3, 1.0);
        let lin = AnisotropyModel::new(1.0, 1.5, 20.0).unwrap().linearize(&d);
        for seed in 0..4 {
            let delta = random((14, 11), 10 + seed, 1.0);
            let cot = TensorField {
                m11: random((14, 11), 20 + seed, 1.0),
                m12: random((14, 11), 30 + seed, 1.0),
                m22: random((14, 11), 40 + seed, 1.0),
            };
            let lhs = lin.apply(&delta).dot(&cot);
            let rhs = crate::field::dot(&delta, &lin.adjoint(&cot));
            assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0), "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn rho_must_be_positive() {
        let d = Array2::zeros((4, 4));
        assert!(anisotropy_tensor(&d, 0.0, 1.0, 1.0).is_err());
        assert!(danisotropy_dd(&d, &d, -1.0, 1.0, 1.0).is_err());
    }
}
