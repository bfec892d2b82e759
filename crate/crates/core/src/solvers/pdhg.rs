//! First-order primal-dual splitting (Chambolle–Pock) for
//!
//! ```text
//! min_x  ½ Σ a (x - c)²  [+ ι(x ≥ 0)]  +  Σ_b F_b(K_b x)
//! ```
//!
//! where each `F_b` is either a weighted quadratic or a shifted group
//! `ℓ_{2,1}` norm. Both convex subproblems of the joint solver and the TV
//! baseline are instances.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::field::{dot, norm, norm_sq};
use crate::regularizers::{div, grad, GradientField, TensorField};
use crate::tomo::XrayTransform;

/// Consecutive rising checks above 1000× the start objective that count
/// as divergence.
const DIVERGENCE_CHECKS: usize = 10;

/// Column sums below this leave an entry effectively free of the blocks.
const UNCOUPLED: f64 = 1e-12;

enum Steps {
    Scalar { tau: f64, sigmas: Vec<f64> },
    Diagonal { tau: Array2<f64>, sigmas: Vec<Array2<f64>> },
}

/// A linear map from a scalar field to one or two planes.
pub trait LinearMap {
    fn apply(&self, x: &Array2<f64>) -> Vec<Array2<f64>>;
    fn adjoint(&self, p: &[Array2<f64>]) -> Array2<f64>;

    /// Upper bounds on the absolute row sums (one field per output plane)
    /// and column sums of the matrix, for an input of shape `dim`. Maps that
    /// provide them can be diagonally preconditioned.
    fn abs_sums(&self, dim: (usize, usize)) -> Option<(Vec<Array2<f64>>, Array2<f64>)> {
        let _ = dim;
        None
    }
}

/// `x ↦ A ∇x` for a pointwise symmetric tensor field `A`, or plain `∇`.
pub struct TensorGradient<'a> {
    pub tensor: Option<&'a TensorField>,
}

impl LinearMap for TensorGradient<'_> {
    fn apply(&self, x: &Array2<f64>) -> Vec<Array2<f64>> {
        let g = grad(x);
        let g = match self.tensor {
            Some(a) => g.apply_tensor(a),
            None => g,
        };
        vec![g.x, g.y]
    }

    fn adjoint(&self, p: &[Array2<f64>]) -> Array2<f64> {
        let q = GradientField {
            x: p[0].clone(),
            y: p[1].clone(),
        };
        let q = match self.tensor {
            Some(a) => q.apply_tensor(a),
            None => q,
        };
        -div(&q)
    }

    fn abs_sums(&self, dim: (usize, usize)) -> Option<(Vec<Array2<f64>>, Array2<f64>)> {
        let (rows, cols) = dim;
        let coeff = |idx: (usize, usize)| match self.tensor {
            Some(a) => [a.m11[idx].abs(), a.m12[idx].abs(), a.m22[idx].abs()],
            None => [1.0, 0.0, 1.0],
        };
        let mut row_x = Array2::zeros(dim);
        let mut row_y = Array2::zeros(dim);
        let mut col = Array2::<f64>::zeros(dim);
        for i in 0..rows {
            for j in 0..cols {
                let [m11, m12, m22] = coeff((i, j));
                // Each active difference has two unit coefficients.
                let ax = if j + 1 < cols { 2.0 } else { 0.0 };
                let ay = if i + 1 < rows { 2.0 } else { 0.0 };
                row_x[[i, j]] = m11 * ax + m12 * ay;
                row_y[[i, j]] = m12 * ax + m22 * ay;
                if ax > 0.0 {
                    col[[i, j]] += m11 + m12;
                    col[[i, j + 1]] += m11 + m12;
                }
                if ay > 0.0 {
                    col[[i, j]] += m12 + m22;
                    col[[i + 1, j]] += m12 + m22;
                }
            }
        }
        Some((vec![row_x, row_y], col))
    }
}

/// The X-ray transform as a single-plane block operator.
pub struct Projection<'a>(pub &'a XrayTransform);

impl LinearMap for Projection<'_> {
    fn apply(&self, x: &Array2<f64>) -> Vec<Array2<f64>> {
        vec![self.0.forward(x)]
    }

    fn adjoint(&self, p: &[Array2<f64>]) -> Array2<f64> {
        self.0.adjoint(&p[0])
    }

    /// The weights are non-negative, so `R 1` and `Rᵀ 1` are exact.
    fn abs_sums(&self, dim: (usize, usize)) -> Option<(Vec<Array2<f64>>, Array2<f64>)> {
        let rows = self.0.forward(&Array2::from_elem(dim, 1.0));
        let cols = self.0.adjoint(&Array2::from_elem(self.0.sinogram_dim(), 1.0));
        Some((vec![rows], cols))
    }
}

/// Closure-backed [`LinearMap`].
pub struct FnMap<F, G> {
    pub forward: F,
    pub backward: G,
}

impl<F, G> LinearMap for FnMap<F, G>
where
    F: Fn(&Array2<f64>) -> Vec<Array2<f64>>,
    G: Fn(&[Array2<f64>]) -> Array2<f64>,
{
    fn apply(&self, x: &Array2<f64>) -> Vec<Array2<f64>> {
        (self.forward)(x)
    }
    fn adjoint(&self, p: &[Array2<f64>]) -> Array2<f64> {
        (self.backward)(p)
    }
}

/// The convex function composed with a block's operator.
#[derive(Clone, Debug)]
pub enum DualTerm {
    /// `½ Σ w (z - c)²` on a single plane.
    Quadratic { weight: Array2<f64>, center: Array2<f64> },
    /// `β Σ_pixels |z + shift|₂` over two planes.
    GroupNorm { beta: f64, shift: Option<[Array2<f64>; 2]> },
}

impl DualTerm {
    fn value(&self, z: &[Array2<f64>]) -> f64 {
        match self {
            DualTerm::Quadratic { weight, center } => {
                let mut acc = 0.0;
                for ((&zi, &w), &c) in z[0].iter().zip(weight).zip(center) {
                    acc += w * (zi - c) * (zi - c);
                }
                0.5 * acc
            }
            DualTerm::GroupNorm { beta, shift } => {
                let mut acc = 0.0;
                for (i, (&zx, &zy)) in z[0].iter().zip(z[1].iter()).enumerate() {
                    let (sx, sy) = match shift {
                        Some([sx, sy]) => (
                            sx.as_slice().expect("standard layout")[i],
                            sy.as_slice().expect("standard layout")[i],
                        ),
                        None => (0.0, 0.0),
                    };
                    acc += (zx + sx).hypot(zy + sy);
                }
                beta * acc
            }
        }
    }

    /// `prox_{σ F*}` in place; `sigma(i)` is the step of entry `i` (shared
    /// by both planes of a group).
    fn prox_conjugate(&self, p: &mut [Array2<f64>], sigma: impl Fn(usize) -> f64) {
        match self {
            DualTerm::Quadratic { weight, center } => {
                let p = p[0].as_slice_mut().expect("standard layout");
                let (w, c) = (
                    weight.as_slice().expect("standard layout"),
                    center.as_slice().expect("standard layout"),
                );
                for i in 0..p.len() {
                    let s = sigma(i);
                    p[i] = if w[i] > 0.0 { w[i] * (p[i] - s * c[i]) / (w[i] + s) } else { 0.0 };
                }
            }
            DualTerm::GroupNorm { beta, shift } => {
                let (px, py) = p.split_at_mut(1);
                let (px, py) = (
                    px[0].as_slice_mut().expect("standard layout"),
                    py[0].as_slice_mut().expect("standard layout"),
                );
                let shift = shift.as_ref().map(|[sx, sy]| {
                    (
                        sx.as_slice().expect("standard layout"),
                        sy.as_slice().expect("standard layout"),
                    )
                });
                for i in 0..px.len() {
                    let (mut x, mut y) = (px[i], py[i]);
                    if let Some((sx, sy)) = shift {
                        let s = sigma(i);
                        x += s * sx[i];
                        y += s * sy[i];
                    }
                    let n = x.hypot(y);
                    let scale = if n > *beta { beta / n } else { 1.0 };
                    px[i] = x * scale;
                    py[i] = y * scale;
                }
            }
        }
    }
}

pub struct Block<'a> {
    pub op: Box<dyn LinearMap + 'a>,
    pub term: DualTerm,
    /// Operator norm; estimated by power iteration when `None`.
    pub norm: Option<f64>,
}

impl<'a> Block<'a> {
    pub fn new(op: impl LinearMap + 'a, term: DualTerm) -> Self {
        Self {
            op: Box::new(op),
            term,
            norm: None,
        }
    }

    pub fn with_norm(mut self, norm: f64) -> Self {
        self.norm = Some(norm);
        self
    }
}

/// Separable primal term `½ Σ a (x - c)²`, optionally restricted to `x ≥ 0`.
#[derive(Clone, Debug)]
pub struct PrimalTerm {
    pub weight: Array2<f64>,
    pub center: Array2<f64>,
    pub nonnegative: bool,
}

impl PrimalTerm {
    pub fn zero(dim: (usize, usize), nonnegative: bool) -> Self {
        Self {
            weight: Array2::zeros(dim),
            center: Array2::zeros(dim),
            nonnegative,
        }
    }

    fn value(&self, x: &Array2<f64>) -> f64 {
        let mut acc = 0.0;
        for ((&xi, &a), &c) in x.iter().zip(&self.weight).zip(&self.center) {
            acc += a * (xi - c) * (xi - c);
        }
        0.5 * acc
    }

    fn prox(&self, x: &mut Array2<f64>, tau: impl Fn(usize) -> f64) {
        let nonneg = self.nonnegative;
        let x = x.as_slice_mut().expect("standard layout");
        let (a, c) = (
            self.weight.as_slice().expect("standard layout"),
            self.center.as_slice().expect("standard layout"),
        );
        for i in 0..x.len() {
            let t = tau(i);
            let mut v = (x[i] + t * a[i] * c[i]) / (1.0 + t * a[i]);
            if nonneg && v < 0.0 {
                v = 0.0;
            }
            x[i] = v;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PdhgOptions {
    pub max_iters: usize,
    /// Relative objective change over one check window that counts as
    /// converged.
    pub tol: f64,
    /// Ratio `τ / σ`-balance: `τ = gamma / L`.
    pub gamma: f64,
    pub check_every: usize,
    pub power_iters: usize,
    /// Use per-entry steps when every block reports its absolute sums.
    pub precondition: bool,
}

impl Default for PdhgOptions {
    fn default() -> Self {
        Self {
            max_iters: 200,
            tol: 1e-6,
            gamma: 1.0,
            check_every: 10,
            power_iters: 20,
            precondition: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PdhgOutcome {
    pub x: Array2<f64>,
    pub objective: f64,
    pub start_objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Final internal state, for continuing on a nearby problem.
    pub warm: WarmStart,
}

/// Primal and dual iterates to resume from.
#[derive(Clone, Debug)]
pub struct WarmStart {
    pub x: Array2<f64>,
    pub dual: Vec<Vec<Array2<f64>>>,
}

pub struct PdhgProblem<'a> {
    pub primal: PrimalTerm,
    pub blocks: Vec<Block<'a>>,
    /// Added to every objective value; lets a reformulated problem report
    /// the original objective.
    pub constant: f64,
}

impl<'a> PdhgProblem<'a> {
    pub fn objective(&self, x: &Array2<f64>) -> f64 {
        self.constant
            + self.primal.value(x)
            + self
                .blocks
                .iter()
                .map(|b| b.term.value(&b.op.apply(x)))
                .sum::<f64>()
    }

    fn block_norms(&self, dim: (usize, usize), iters: usize) -> Vec<f64> {
        self.blocks
            .iter()
            .map(|b| match b.norm {
                Some(n) => n,
                None => power_norm(b.op.as_ref(), dim, iters),
            })
            .collect()
    }

    /// Per-entry steps `σ_i = 1 / Σ_j |K_ij|`, `τ_j = 1 / Σ_i |K_ij|` when
    /// every block supplies its sums, otherwise scalar steps balanced over
    /// the block norms.
    fn steps(&self, dim: (usize, usize), opts: &PdhgOptions) -> Steps {
        if opts.precondition {
            let sums: Option<Vec<_>> = self.blocks.iter().map(|b| b.op.abs_sums(dim)).collect();
            if let Some(sums) = sums {
                let mut col_total = Array2::<f64>::zeros(dim);
                let sigmas = sums
                    .iter()
                    .map(|(rows, col)| {
                        col_total += col;
                        let mut worst = rows[0].clone();
                        for r in &rows[1..] {
                            worst.zip_mut_with(r, |a, &b| *a = a.max(b));
                        }
                        worst.mapv(|r| if r > 0.0 { 1.0 / r } else { 0.0 })
                    })
                    .collect();
                let tau = col_total.mapv(|c| 1.0 / c.max(UNCOUPLED));
                return Steps::Diagonal { tau, sigmas };
            }
        }
        // Power iteration approaches the norm from below.
        let norms: Vec<f64> = self.block_norms(dim, opts.power_iters).iter().map(|n| n * 1.02).collect();
        let m = norms.iter().filter(|&&n| n > 0.0).count().max(1);
        let l_tot = norms.iter().map(|n| n * n).sum::<f64>().sqrt();
        let tau = if l_tot > 0.0 { opts.gamma / l_tot } else { 1.0 };
        let sigmas = norms
            .iter()
            .map(|&n| if n > 0.0 { 1.0 / (m as f64 * tau * n * n) } else { 0.0 })
            .collect();
        Steps::Scalar { tau, sigmas }
    }

    /// Runs from `x0` (projected onto the primal domain first when it is
    /// infeasible) and returns the best iterate seen at a check point, so
    /// the result never scores worse than the start.
    pub fn solve(&self, x0: &Array2<f64>, opts: &PdhgOptions) -> Result<PdhgOutcome> {
        self.solve_warm(x0, None, opts)
    }

    pub fn solve_warm(
        &self,
        x0: &Array2<f64>,
        warm: Option<WarmStart>,
        opts: &PdhgOptions,
    ) -> Result<PdhgOutcome> {
        let dim = x0.dim();
        let mut x = x0.clone();
        if self.primal.nonnegative {
            x.mapv_inplace(|v| v.max(0.0));
        }
        let start_objective = self.objective(&x);
        if !start_objective.is_finite() {
            return Err(Error::Solver(format!(
                "objective is not finite at the start point ({start_objective})"
            )));
        }
        let steps = self.steps(dim, opts);
        let active: Vec<bool> = match &steps {
            Steps::Scalar { sigmas, .. } => sigmas.iter().map(|&s| s > 0.0).collect(),
            Steps::Diagonal { sigmas, .. } => sigmas.iter().map(|s| s.iter().any(|&v| v > 0.0)).collect(),
        };
        let m = active.iter().filter(|&&a| a).count();

        let fresh: Vec<Vec<Array2<f64>>> = self
            .blocks
            .iter()
            .map(|b| {
                let planes = match b.term {
                    DualTerm::Quadratic { .. } => 1,
                    DualTerm::GroupNorm { .. } => 2,
                };
                let shape = b.op.apply(&x)[0].dim();
                vec![Array2::zeros(shape); planes]
            })
            .collect();
        let fits = |w: &WarmStart| {
            w.x.dim() == dim
                && w.dual.len() == fresh.len()
                && w.dual.iter().zip(&fresh).all(|(a, b)| {
                    a.len() == b.len() && a.iter().zip(b).all(|(p, q)| p.dim() == q.dim())
                })
        };
        let best = (start_objective, x.clone());
        let mut dual = match warm {
            Some(w) if fits(&w) => {
                x = w.x;
                if self.primal.nonnegative {
                    x.mapv_inplace(|v| v.max(0.0));
                }
                w.dual
            }
            _ => fresh,
        };
        let mut best = best;
        if m == 0 {
            // Only the separable term: one prox step is exact.
            let x = best.1.clone();
            let mut y = x.clone();
            let a_max = self.primal.weight.iter().fold(0.0f64, |a, &b| a.max(b));
            if a_max > 0.0 {
                // Large step: prox_{t h}(x) → argmin h as t → ∞ where a > 0.
                y = self.primal.center.clone();
                ndarray::Zip::from(&mut y)
                    .and(&x)
                    .and(&self.primal.weight)
                    .for_each(|yi, &xi, &a| {
                        if a <= 0.0 {
                            *yi = xi;
                        }
                    });
                if self.primal.nonnegative {
                    y.mapv_inplace(|v| v.max(0.0));
                }
            }
            let obj = self.objective(&y);
            if obj <= best.0 {
                best = (obj, y);
            }
            return Ok(PdhgOutcome {
                warm: WarmStart { x: best.1.clone(), dual },
                x: best.1,
                objective: best.0,
                start_objective,
                iterations: 0,
                converged: true,
            });
        }

        let mut x_bar = x.clone();
        let mut last_check = start_objective;
        let mut converged = false;
        let mut iterations = 0;
        let mut blown = 0;
        let check = opts.check_every.max(1);
        for it in 1..=opts.max_iters {
            iterations = it;
            let mut kt = Array2::<f64>::zeros(dim);
            for (bi, block) in self.blocks.iter().enumerate() {
                if !active[bi] {
                    continue;
                }
                let kx = block.op.apply(&x_bar);
                let p = &mut dual[bi];
                match &steps {
                    Steps::Scalar { sigmas, .. } => {
                        let s = sigmas[bi];
                        for (pp, kp) in p.iter_mut().zip(&kx) {
                            pp.scaled_add(s, kp);
                        }
                        block.term.prox_conjugate(p, |_| s);
                    }
                    Steps::Diagonal { sigmas, .. } => {
                        let s = &sigmas[bi];
                        for (pp, kp) in p.iter_mut().zip(&kx) {
                            ndarray::Zip::from(pp).and(kp).and(s).for_each(|pi, &ki, &si| *pi += si * ki);
                        }
                        let s = s.as_slice().expect("standard layout");
                        block.term.prox_conjugate(p, |i| s[i]);
                    }
                }
                kt += &block.op.adjoint(p);
            }
            let mut x_new = x.clone();
            match &steps {
                Steps::Scalar { tau, .. } => {
                    x_new.scaled_add(-tau, &kt);
                    self.primal.prox(&mut x_new, |_| *tau);
                }
                Steps::Diagonal { tau, .. } => {
                    ndarray::Zip::from(&mut x_new).and(&kt).and(tau).for_each(|xi, &k, &t| *xi -= t * k);
                    let t = tau.as_slice().expect("standard layout");
                    self.primal.prox(&mut x_new, |i| t[i]);
                }
            }
            x_bar = &x_new * 2.0 - &x;
            x = x_new;

            if it % check == 0 || it == opts.max_iters {
                let obj = self.objective(&x);
                // Early transients can overshoot; only a sustained blow-up
                // counts as divergence.
                if obj > 1e3 * start_objective.abs().max(1e-300) + start_objective && obj > last_check {
                    blown += 1;
                } else {
                    blown = 0;
                }
                if !obj.is_finite() || blown >= DIVERGENCE_CHECKS {
                    return Err(Error::Solver(format!(
                        "primal-dual iteration diverged at step {it}: objective {obj:e} from {start_objective:e}"
                    )));
                }
                if obj < best.0 {
                    best = (obj, x.clone());
                }
                let rel = (last_check - obj).abs() / obj.abs().max(1e-300);
                last_check = obj;
                if rel <= opts.tol {
                    converged = true;
                    break;
                }
            }
        }
        Ok(PdhgOutcome {
            x: best.1,
            objective: best.0,
            start_objective,
            iterations,
            converged,
            warm: WarmStart { x, dual },
        })
    }
}

/// `‖K‖` by power iteration on `KᵀK` from a fixed start.
pub fn power_norm(op: &dyn LinearMap, dim: (usize, usize), iters: usize) -> f64 {
    // Deterministic, non-constant start so that constant-annihilating
    // operators such as ∇ are not started in their kernel.
    let mut x = Array2::from_shape_fn(dim, |(i, j)| {
        1.0 + 0.5 * ((i * 7 + j * 13) % 11) as f64 / 11.0 - 0.25 * ((i + 2 * j) % 3) as f64
    });
    let mut est = 0.0;
    for _ in 0..iters.max(1) {
        let n = norm(&x);
        if n == 0.0 {
            return 0.0;
        }
        x.mapv_inplace(|v| v / n);
        let kx = op.apply(&x);
        est = kx.iter().map(norm_sq).sum::<f64>().sqrt();
        x = op.adjoint(&kx);
    }
    est
}

/// Checks `⟨Kx, p⟩ = ⟨x, Kᵀp⟩` on the supplied pair; returns the relative
/// error.
pub fn adjoint_mismatch(op: &dyn LinearMap, x: &Array2<f64>, p: &[Array2<f64>]) -> f64 {
    let lhs: f64 = op.apply(x).iter().zip(p).map(|(a, b)| dot(a, b)).sum();
    let rhs = dot(x, &op.adjoint(p));
    (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1e-300)
}
