//! The joint reconstruction–inpainting objective
//!
//! ```text
//! E(u, v) = ½‖Ru − v‖²_{α₁} + α₂/2 ‖S Ru − b‖² + α₃/2 ‖S v − b‖²
//!         + β₁ TV(u) + β₂ ‖A_{Ru} ∇v‖_{2,1}
//! ```
//!
//! and its split `E = f + g∘J` with `g(z) = β₂‖z‖_{2,1}`,
//! `J(u, v) = A_{Ru} ∇v`.

use std::fmt;

use ndarray::Array2;

use crate::error::{check_shape, Error, Result};
use crate::field::{dist_sq, min_value};
use crate::regularizers::{grad, tv, AnisotropyLinearization, AnisotropyModel, GradientField, TensorField};
use crate::tomo::{SampleMask, XrayTransform};

/// Weights and solver controls of the joint model.
#[derive(Clone, Debug, PartialEq)]
pub struct JointParams {
    /// Weight of the `Ru ≈ v` pairing outside the acquired region; zero
    /// inside it.
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    pub rho: f64,
    pub sigma: f64,
    pub tau_x: f64,
    pub tau_y: f64,
    pub iters: usize,
    pub inner_iters: usize,
    pub inner_tol: f64,
}

impl Default for JointParams {
    /// The concentric-rings weights.
    fn default() -> Self {
        Self {
            alpha1: 0.25,
            alpha2: 1.0,
            alpha3: 0.1,
            beta1: 3e-5,
            beta2: 3e3,
            beta3: 1e10,
            rho: 1.0,
            sigma: 8.0,
            tau_x: 1.0,
            tau_y: 1.0,
            iters: 200,
            inner_iters: 200,
            inner_tol: 1e-6,
        }
    }
}

impl JointParams {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("alpha1", self.alpha1),
            ("alpha2", self.alpha2),
            ("alpha3", self.alpha3),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
            ("beta3", self.beta3),
            ("sigma", self.sigma),
            ("tau_x", self.tau_x),
            ("tau_y", self.tau_y),
            ("inner_tol", self.inner_tol),
        ];
        for (name, v) in named {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::Config(format!("rho must be positive, got {}", self.rho)));
        }
        Ok(())
    }
}

/// Term-wise energy.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EnergyTerms {
    /// `½‖Ru − v‖²_{α₁}`
    pub pairing: f64,
    /// `α₂/2 ‖S Ru − b‖²`
    pub data_u: f64,
    /// `α₃/2 ‖S v − b‖²`
    pub data_v: f64,
    /// `β₁ TV(u)`
    pub tv_u: f64,
    /// `β₂ DTV_{Ru}(v)`
    pub dtv_v: f64,
    pub total: f64,
    /// Smallest entry of `u`; negative values violate the model's
    /// constraint but are reported rather than rejected.
    pub min_u: f64,
}

impl EnergyTerms {
    pub fn terms(&self) -> [f64; 5] {
        [self.pairing, self.data_u, self.data_v, self.tv_u, self.dtv_v]
    }

    pub fn is_feasible(&self) -> bool {
        self.min_u >= 0.0
    }
}

impl fmt::Display for EnergyTerms {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "pairing={:e} data_u={:e} data_v={:e} tv_u={:e} dtv_v={:e} total={:e}",
            self.pairing, self.data_u, self.data_v, self.tv_u, self.dtv_v, self.total
        )
    }
}

/// A fully specified instance of the joint model.
#[derive(Clone, Debug)]
pub struct JointProblem {
    pub op: XrayTransform,
    /// 0/1 sampling weights of `S`.
    pub sampled: Array2<f64>,
    /// Data, zero outside the acquired region.
    pub b: Array2<f64>,
    pub params: JointParams,
    pub model: AnisotropyModel,
    /// Spatial `α₁` field: `alpha1` off the acquired region, 0 on it.
    pub alpha1_field: Array2<f64>,
    op_norm: f64,
}

impl JointProblem {
    pub fn new(op: XrayTransform, mask: &SampleMask, b: &Array2<f64>, params: JointParams) -> Result<Self> {
        params.validate()?;
        check_shape(op.sinogram_dim(), mask.flags.dim())?;
        check_shape(op.sinogram_dim(), b.dim())?;
        let sampled = mask.weights();
        let b = b * &sampled;
        let alpha1_field = sampled.mapv(|s| if s > 0.0 { 0.0 } else { params.alpha1 });
        let model = AnisotropyModel::new(params.rho, params.sigma, params.beta3)?;
        let op_norm = op.norm_estimate(30);
        Ok(Self {
            op,
            sampled,
            b,
            params,
            model,
            alpha1_field,
            op_norm,
        })
    }

    /// Estimated `‖R‖`.
    pub fn op_norm(&self) -> f64 {
        self.op_norm
    }

    pub fn image_dim(&self) -> (usize, usize) {
        self.op.image_dim()
    }

    pub fn sinogram_dim(&self) -> (usize, usize) {
        self.op.sinogram_dim()
    }

    fn check(&self, u: &Array2<f64>, v: &Array2<f64>) -> Result<()> {
        check_shape(self.image_dim(), u.dim())?;
        check_shape(self.sinogram_dim(), v.dim())
    }

    pub fn anisotropy(&self, u: &Array2<f64>) -> TensorField {
        self.model.tensor(&self.op.forward(u))
    }

    pub fn energy(&self, u: &Array2<f64>, v: &Array2<f64>) -> Result<EnergyTerms> {
        self.check(u, v)?;
        let ru = self.op.forward(u);
        Ok(self.energy_with(u, &ru, v, &self.model.tensor(&ru)))
    }

    /// Energy given precomputed `Ru` and `A_{Ru}`.
    pub fn energy_with(&self, u: &Array2<f64>, ru: &Array2<f64>, v: &Array2<f64>, a: &TensorField) -> EnergyTerms {
        let p = &self.params;
        let mut pairing = 0.0;
        let mut data_u = 0.0;
        let mut data_v = 0.0;
        for (((&r, &vv), &w), (&s, &b)) in ru
            .iter()
            .zip(v)
            .zip(&self.alpha1_field)
            .zip(self.sampled.iter().zip(&self.b))
        {
            pairing += w * (r - vv) * (r - vv);
            data_u += s * (r - b) * (r - b);
            data_v += s * (vv - b) * (vv - b);
        }
        let pairing = 0.5 * pairing;
        let data_u = 0.5 * p.alpha2 * data_u;
        let data_v = 0.5 * p.alpha3 * data_v;
        let tv_u = if p.beta1 > 0.0 { p.beta1 * tv(u) } else { 0.0 };
        let dtv_v = if p.beta2 > 0.0 { self.g(&grad(v).apply_tensor(a)) } else { 0.0 };
        EnergyTerms {
            pairing,
            data_u,
            data_v,
            tv_u,
            dtv_v,
            total: pairing + data_u + data_v + tv_u + dtv_v,
            min_u: min_value(u),
        }
    }

    /// The convex part: quadratics, `β₁ TV(u)` and the indicator of `u ≥ 0`.
    pub fn f(&self, u: &Array2<f64>, v: &Array2<f64>) -> Result<f64> {
        let e = self.energy(u, v)?;
        if !e.is_feasible() {
            return Ok(f64::INFINITY);
        }
        Ok(e.total - e.dtv_v)
    }

    /// `g(z) = β₂ ‖z‖_{2,1}`.
    pub fn g(&self, z: &GradientField) -> f64 {
        self.params.beta2 * z.norm21()
    }

    /// `J(u, v) = A_{Ru} ∇v`.
    pub fn j(&self, u: &Array2<f64>, v: &Array2<f64>) -> Result<GradientField> {
        self.check(u, v)?;
        Ok(grad(v).apply_tensor(&self.anisotropy(u)))
    }

    /// `∇ₓJ(u, v) du = dA_{Ru}[R du] ∇v`.
    pub fn linearize_j_in_x(&self, u: &Array2<f64>, v: &Array2<f64>, du: &Array2<f64>) -> Result<GradientField> {
        self.check(u, v)?;
        check_shape(u.dim(), du.dim())?;
        let lin = self.model.linearize(&self.op.forward(u));
        Ok(grad(v).apply_tensor(&lin.apply(&self.op.forward(du))))
    }

    /// `∇ᵧJ(u, v) dv = A_{Ru} ∇dv`; exact since `J` is linear in `v`.
    pub fn linearize_j_in_y(&self, u: &Array2<f64>, v: &Array2<f64>, dv: &Array2<f64>) -> Result<GradientField> {
        self.check(u, v)?;
        check_shape(v.dim(), dv.dim())?;
        Ok(grad(dv).apply_tensor(&self.anisotropy(u)))
    }

    pub(crate) fn linearization_at(&self, ru: &Array2<f64>) -> AnisotropyLinearization {
        self.model.linearize(ru)
    }

    /// `‖u − u'‖²` for convenience in traces.
    pub fn step_sq(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
        dist_sq(a, b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantoms::two_rings;
    use crate::tomo::{make_limited_angle_mask, wedge_angles, ProjectionGeometry};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn problem(n: usize, params: JointParams) -> JointProblem {
        let h = 2.0 / n as f64;
        let det = ProjectionGeometry::default_detector_count(n, n);
        let g = ProjectionGeometry::uniform(36, 0.0, 5.0, det, h).unwrap();
        let mask = make_limited_angle_mask(&g, &wedge_angles(&g, 0.0, 60.0)).unwrap();
        let op = XrayTransform::new(g.clone(), n, n, h).unwrap();
        let phantom = two_rings(n).values;
        let b = op.forward(&phantom);
        JointProblem::new(op, &mask, &b, params).unwrap()
    }

    fn random(dim: (usize, usize), rng: &mut ChaCha8Rng) -> Array2<f64> {
        Array2::from_shape_fn(dim, |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn zero_everything_is_zero() {
        let mut p = problem(16, JointParams::default());
        p.b.fill(0.0);
        let e = p.energy(&Array2::zeros(p.image_dim()), &Array2::zeros(p.sinogram_dim())).unwrap();
        assert_eq!(e.total, 0.0);
    }

    #[test]
    fn term_isolation_with_zero_image_and_data() {
        let mut p = problem(16, JointParams::default());
        p.b.fill(0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = random(p.sinogram_dim(), &mut rng);
        let e = p.energy(&Array2::zeros(p.image_dim()), &v).unwrap();
        assert!(e.data_v > 0.0 && e.pairing > 0.0);
        assert_eq!(e.data_u, 0.0);
        assert_eq!(e.tv_u, 0.0);
        // A_0 = 1e-6·I, so DTV is tiny but present.
        assert!(e.dtv_v > 0.0);
    }

    #[test]
    fn rings_with_table_weights_are_finite() {
        let p = problem(32, JointParams::default());
        let u = two_rings(32).values;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let v = &p.op.forward(&u) + &random(p.sinogram_dim(), &mut rng).mapv(|x| 0.01 * x);
        let e = p.energy(&u, &v).unwrap();
        for t in e.terms() {
            assert!(t.is_finite() && t >= 0.0, "{e}");
        }
        let sum: f64 = e.terms().iter().sum();
        assert!((sum - e.total).abs() <= 1e-12 * e.total);
    }

    #[test]
    fn reduces_to_tikhonov_tv() {
        let params = JointParams {
            alpha1: 0.0,
            alpha3: 0.0,
            beta2: 0.0,
            beta1: 0.01,
            ..Default::default()
        };
        let p = problem(16, params);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = random(p.image_dim(), &mut rng).mapv(f64::abs);
        let v = random(p.sinogram_dim(), &mut rng);
        let e = p.energy(&u, &v).unwrap();
        let ru = p.op.forward(&u);
        let res = (&ru * &p.sampled) - &p.b;
        let expected = 0.5 * crate::field::norm_sq(&res) + 0.01 * tv(&u);
        assert!((e.total - expected).abs() <= 1e-12 * expected);
    }

    #[test]
    fn g_of_j_matches_dtv() {
        let p = problem(16, JointParams::default());
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let u = two_rings(16).values;
        let v = random(p.sinogram_dim(), &mut rng);
        let e = p.energy(&u, &v).unwrap();
        let gj = p.g(&p.j(&u, &v).unwrap());
        let direct = p.params.beta2 * crate::regularizers::dtv(&v, &p.anisotropy(&u));
        assert!((gj - e.dtv_v).abs() <= 1e-12 * gj.abs());
        assert!((gj - direct).abs() <= 1e-12 * gj.abs());
    }

    #[test]
    fn g_is_a_seminorm() {
        let p = problem(16, JointParams::default());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let z = GradientField {
                x: random(p.sinogram_dim(), &mut rng),
                y: random(p.sinogram_dim(), &mut rng),
            };
            let w = GradientField {
                x: random(p.sinogram_dim(), &mut rng),
                y: random(p.sinogram_dim(), &mut rng),
            };
            let neg = GradientField { x: -&z.x, y: -&z.y };
            let dbl = GradientField { x: &z.x * 2.0, y: &z.y * 2.0 };
            let sum = GradientField { x: &z.x + &w.x, y: &z.y + &w.y };
            assert_eq!(p.g(&GradientField::zeros(p.sinogram_dim())), 0.0);
            assert!((p.g(&neg) - p.g(&z)).abs() <= 1e-12 * p.g(&z));
            assert!((p.g(&dbl) - 2.0 * p.g(&z)).abs() <= 1e-12 * p.g(&z));
            assert!(p.g(&sum) <= p.g(&z) + p.g(&w) + 1e-9);
        }
    }

    #[test]
    fn f_is_convex_on_random_pairs() {
        let p = problem(16, JointParams::default());
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..10 {
            let (u1, u2) = (
                random(p.image_dim(), &mut rng).mapv(f64::abs),
                random(p.image_dim(), &mut rng).mapv(f64::abs),
            );
            let (v1, v2) = (random(p.sinogram_dim(), &mut rng), random(p.sinogram_dim(), &mut rng));
            let mid = p.f(&((&u1 + &u2) * 0.5), &((&v1 + &v2) * 0.5)).unwrap();
            let avg = 0.5 * (p.f(&u1, &v1).unwrap() + p.f(&u2, &v2).unwrap());
            assert!(mid <= avg * (1.0 + 1e-12));
            assert!(mid >= 0.0);
        }
        let neg = Array2::from_elem(p.image_dim(), -1.0);
        assert_eq!(p.f(&neg, &Array2::zeros(p.sinogram_dim())).unwrap(), f64::INFINITY);
    }

    #[test]
    fn j_vanishes_at_zero_sinogram_and_y_linearization_is_exact() {
        let p = problem(16, JointParams::default());
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let u = two_rings(16).values;
        let j0 = p.j(&u, &Array2::zeros(p.sinogram_dim())).unwrap();
        assert!(j0.x.iter().chain(j0.y.iter()).all(|&z| z == 0.0));

        let v = random(p.sinogram_dim(), &mut rng);
        let dv = random(p.sinogram_dim(), &mut rng);
        let lhs = p.j(&u, &(&v + &dv)).unwrap();
        let base = p.j(&u, &v).unwrap();
        let lin = p.linearize_j_in_y(&u, &v, &dv).unwrap();
        let worst = lhs
            .x
            .iter()
            .zip(&base.x)
            .zip(&lin.x)
            .chain(lhs.y.iter().zip(&base.y).zip(&lin.y))
            .map(|((a, b), c)| (a - b - c).abs())
            .fold(0.0f64, f64::max);
        assert!(worst <= 1e-12, "{worst}");
    }

    #[test]
    fn x_linearization_of_zero_step_is_zero() {
        let p = problem(16, JointParams::default());
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let u = two_rings(16).values;
        let v = random(p.sinogram_dim(), &mut rng);
        let d = p.linearize_j_in_x(&u, &v, &Array2::zeros(p.image_dim())).unwrap();
        assert!(d.x.iter().chain(d.y.iter()).all(|&z| z == 0.0));
    }

    #[test]
    fn invalid_parameters_are_config_errors() {
        let bad = JointParams {
            rho: 0.0,
            ..Default::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let bad = JointParams {
            beta2: -1.0,
            ..Default::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
    }
}
