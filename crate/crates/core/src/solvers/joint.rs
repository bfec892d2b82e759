//! Alternating linearized proximal descent on the joint energy.
//!
//! Each outer iteration solves two convex problems:
//!
//! * in `u`, `f(u, v_n) + τx‖u − u_n‖² + g(J_n + ∇ₓJ_n (u − u_n))` with
//!   `u ≥ 0`;
//! * in `v`, `f(u_{n+1}, v) + τy‖v − v_n‖² + g(A_{Ru_{n+1}} ∇v)`, which is
//!   exact because `J` is linear in `v`.
//!
//! The proximal weights are found by backtracking: a step that fails the
//! sufficient-decrease test doubles its `τ` and is redone.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use super::pdhg::{Block, DualTerm, FnMap, PdhgOptions, PdhgProblem, PrimalTerm, Projection, TensorGradient, WarmStart};
use crate::energy::{EnergyTerms, JointProblem};
use crate::error::{check_shape, Error, Result};
use crate::field::dist_sq;
use crate::regularizers::{grad, TensorField};

/// `‖∇‖ ≤ √8` for forward differences in two dimensions.
pub(crate) const GRAD_NORM: f64 = 2.828_427_124_746_190_3;

#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub x: Array2<f64>,
    /// Subproblem objective at the returned point.
    pub objective: f64,
    /// Subproblem objective at the previous iterate.
    pub start_objective: f64,
    pub inner_iters: usize,
    /// Inner solver state to resume the next, similar subproblem from.
    pub warm: WarmStart,
}

pub(crate) fn pdhg_options(prob: &JointProblem) -> PdhgOptions {
    PdhgOptions {
        max_iters: prob.params.inner_iters,
        tol: prob.params.inner_tol,
        ..Default::default()
    }
}

fn gradient_block<'a>(beta: f64) -> Block<'a> {
    Block::new(TensorGradient { tensor: None }, DualTerm::GroupNorm { beta, shift: None }).with_norm(GRAD_NORM)
}

/// Data block `½ Σ w (Ru − c)²` written so that the reported objective
/// equals `½ Σ Σ_k w_k (Ru − c_k)²` for the original pieces.
fn projection_block<'a>(
    prob: &'a JointProblem,
    pieces: &[(&Array2<f64>, &Array2<f64>)],
) -> (Block<'a>, f64) {
    let dim = prob.sinogram_dim();
    let mut weight = Array2::<f64>::zeros(dim);
    let mut moment = Array2::<f64>::zeros(dim);
    let mut constant = 0.0;
    for (w, c) in pieces {
        weight += *w;
        moment += &(*w * *c);
        constant += w.iter().zip(c.iter()).map(|(w, c)| w * c * c).sum::<f64>();
    }
    let center = Array2::from_shape_fn(dim, |idx| if weight[idx] > 0.0 { moment[idx] / weight[idx] } else { 0.0 });
    constant -= weight.iter().zip(&center).map(|(w, c)| w * c * c).sum::<f64>();
    let block = Block::new(Projection(&prob.op), DualTerm::Quadratic { weight, center }).with_norm(prob.op_norm());
    (block, 0.5 * constant)
}

/// The `u` subproblem: see the module documentation.
pub fn x_step(
    prob: &JointProblem,
    u: &Array2<f64>,
    v: &Array2<f64>,
    tau_x: f64,
    warm: Option<WarmStart>,
) -> Result<StepOutcome> {
    check_shape(prob.image_dim(), u.dim())?;
    check_shape(prob.sinogram_dim(), v.dim())?;
    let p = &prob.params;
    let gv = grad(v);
    let ru = prob.op.forward(u);
    let lin = prob.linearization_at(&ru);
    let sampled_a2 = &prob.sampled * p.alpha2;
    let (data, constant) = projection_block(prob, &[(&prob.alpha1_field, v), (&sampled_a2, &prob.b)]);
    let mut blocks = vec![data];
    if p.beta1 > 0.0 {
        blocks.push(gradient_block(p.beta1));
    }

    // Linearized coupling term, present only when DTV is active.
    if p.beta2 > 0.0 {
        let a = prob.model.tensor(&ru);
        let j_n = gv.apply_tensor(&a);
        let l_ru = gv.apply_tensor(&lin.apply(&ru));
        let shift = [&j_n.x - &l_ru.x, &j_n.y - &l_ru.y];
        let (op, lin_ref, gv_ref) = (&prob.op, &lin, &gv);
        blocks.push(Block::new(
            FnMap {
                forward: move |x: &Array2<f64>| {
                    let z = gv_ref.apply_tensor(&lin_ref.apply(&op.forward(x)));
                    vec![z.x, z.y]
                },
                backward: move |q: &[Array2<f64>]| {
                    let (gx, gy) = (&gv_ref.x, &gv_ref.y);
                    let cot = TensorField {
                        m11: gx * &q[0],
                        m12: &(gy * &q[0]) + &(gx * &q[1]),
                        m22: gy * &q[1],
                    };
                    op.adjoint(&lin_ref.adjoint(&cot))
                },
            },
            DualTerm::GroupNorm {
                beta: p.beta2,
                shift: Some(shift),
            },
        ));
    }
    let problem = PdhgProblem {
        primal: PrimalTerm {
            weight: Array2::from_elem(u.dim(), 2.0 * tau_x),
            center: u.clone(),
            nonnegative: true,
        },
        blocks,
        constant,
    };
    let out = problem.solve_warm(u, warm, &pdhg_options(prob))?;
    Ok(StepOutcome {
        x: out.x,
        objective: out.objective,
        start_objective: out.start_objective,
        inner_iters: out.iterations,
        warm: out.warm,
    })
}

/// The `v` subproblem against a fixed `u`.
pub fn y_step(
    prob: &JointProblem,
    u: &Array2<f64>,
    v: &Array2<f64>,
    tau_y: f64,
    warm: Option<WarmStart>,
) -> Result<StepOutcome> {
    check_shape(prob.image_dim(), u.dim())?;
    check_shape(prob.sinogram_dim(), v.dim())?;
    let ru = prob.op.forward(u);
    let a = prob.model.tensor(&ru);
    y_step_with(prob, &ru, &a, v, tau_y, warm)
}

pub(crate) fn y_step_with(
    prob: &JointProblem,
    ru: &Array2<f64>,
    a: &TensorField,
    v: &Array2<f64>,
    tau_y: f64,
    warm: Option<WarmStart>,
) -> Result<StepOutcome> {
    let p = &prob.params;
    let w_b = &prob.sampled * p.alpha3;
    let w_v = Array2::from_elem(v.dim(), 2.0 * tau_y);
    let pieces = [(&prob.alpha1_field, ru), (&w_b, &prob.b), (&w_v, v)];
    let dim = v.dim();
    let mut weight = Array2::<f64>::zeros(dim);
    let mut moment = Array2::<f64>::zeros(dim);
    let mut constant = 0.0;
    for (w, c) in pieces {
        weight += w;
        moment += &(w * c);
        constant += w.iter().zip(c.iter()).map(|(w, c)| w * c * c).sum::<f64>();
    }
    let center = Array2::from_shape_fn(dim, |idx| if weight[idx] > 0.0 { moment[idx] / weight[idx] } else { v[idx] });
    constant -= weight.iter().zip(&center).map(|(w, c)| w * c * c).sum::<f64>();
    let constant = 0.5 * constant;

    let primal = PrimalTerm {
        weight,
        center,
        nonnegative: false,
    };
    let mut blocks = Vec::new();
    if p.beta2 > 0.0 {
        blocks.push(
            Block::new(
                TensorGradient { tensor: Some(a) },
                DualTerm::GroupNorm {
                    beta: p.beta2,
                    shift: None,
                },
            )
            .with_norm(GRAD_NORM * a.max_frobenius()),
        );
    }
    let problem = PdhgProblem {
        primal,
        blocks,
        constant,
    };
    let out = problem.solve_warm(v, warm, &pdhg_options(prob))?;
    Ok(StepOutcome {
        x: out.x,
        objective: out.objective,
        start_objective: out.start_objective,
        inner_iters: out.iterations,
        warm: out.warm,
    })
}

/// One row of the per-iteration trace.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub energy: EnergyTerms,
    pub du_norm: f64,
    pub dv_norm: f64,
    pub tau_x: f64,
    pub tau_y: f64,
    pub inner_x: usize,
    pub inner_y: usize,
}

pub const TRACE_HEADER: &str =
    "iteration,term1,term2,term3,term4,term5,total,du_norm,dv_norm,tau_x,tau_y,inner_x,inner_y";

impl TraceRow {
    pub fn csv(&self) -> String {
        let t = self.energy.terms();
        format!(
            "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{},{}",
            self.iteration,
            t[0],
            t[1],
            t[2],
            t[3],
            t[4],
            self.energy.total,
            self.du_norm,
            self.dv_norm,
            self.tau_x,
            self.tau_y,
            self.inner_x,
            self.inner_y
        )
    }
}

/// Iterates and bookkeeping of a joint run.
#[derive(Clone, Debug)]
pub struct JointState {
    pub u: Array2<f64>,
    pub v: Array2<f64>,
    pub trace: Vec<TraceRow>,
    pub iteration: usize,
    /// `Σ ‖u_n − u_{n−1}‖² + ‖v_n − v_{n−1}‖²`.
    pub step_sum: f64,
    /// Number of redone steps.
    pub backtracks: usize,
    /// Current proximal weights.
    pub tau_x: f64,
    pub tau_y: f64,
    /// The weights the run started from.
    pub tau_x0: f64,
    pub tau_y0: f64,
}

impl JointState {
    pub fn energy_trace(&self) -> Vec<f64> {
        self.trace.iter().map(|r| r.energy.total).collect()
    }

    pub fn initial_energy(&self) -> f64 {
        self.trace.first().map_or(0.0, |r| r.energy.total)
    }

    pub fn final_energy(&self) -> f64 {
        self.trace.last().map_or(0.0, |r| r.energy.total)
    }

    /// Weight of the guaranteed decrease per unit squared step.
    pub fn tau_min(&self) -> f64 {
        0.5 * self.tau_x0.min(self.tau_y0)
    }

    /// `E₀ / τ_min`, the bound on [`JointState::step_sum`].
    pub fn step_sum_bound(&self) -> f64 {
        self.initial_energy() / self.tau_min()
    }

    /// Largest `E_{n} − E_{n−1}` over the trace (non-positive when monotone).
    pub fn worst_increase(&self) -> f64 {
        self.trace
            .windows(2)
            .map(|w| w[1].energy.total - w[0].energy.total)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn write_trace_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "{TRACE_HEADER}")?;
        for row in &self.trace {
            writeln!(f, "{}", row.csv())?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Write `u`/`v` checkpoints every this many iterations (0 = never).
    pub checkpoint_every: usize,
    pub checkpoint_dir: Option<PathBuf>,
    /// Called after every outer iteration.
    pub verbose: bool,
}

/// Number of successful steps with a wide margin before `τ` relaxes.
const RELAX_AFTER: usize = 5;
const MAX_BACKTRACKS: usize = 60;

struct Tau {
    value: f64,
    base: f64,
    streak: usize,
}

impl Tau {
    fn new(base: f64) -> Self {
        Self {
            value: base,
            base,
            streak: 0,
        }
    }

    fn grow(&mut self) {
        self.value = if self.value > 0.0 { 2.0 * self.value } else { 1e-6 };
        self.streak = 0;
    }

    fn record(&mut self, margin: f64, tol: f64) {
        if margin > 10.0 * tol {
            self.streak += 1;
            if self.streak >= RELAX_AFTER && self.value > self.base {
                self.value = (0.5 * self.value).max(self.base);
                self.streak = 0;
            }
        } else {
            self.streak = 0;
        }
    }
}

/// Algorithm driver. Every accepted outer iteration satisfies
/// `E_{n+1} + τ_min (‖Δu‖² + ‖Δv‖²) ≤ E_n + 1e-8 |E₀|`.
pub fn run_joint(
    prob: &JointProblem,
    u0: &Array2<f64>,
    v0: &Array2<f64>,
    opts: &RunOptions,
) -> Result<JointState> {
    check_shape(prob.image_dim(), u0.dim())?;
    check_shape(prob.sinogram_dim(), v0.dim())?;
    let p = &prob.params;
    let mut u = u0.clone();
    let mut v = v0.clone();
    let e0 = prob.energy(&u, &v)?;
    let slack = 1e-8 * e0.total.abs();
    let mut tx = Tau::new(p.tau_x);
    let mut ty = Tau::new(p.tau_y);
    let (wx, wy) = (0.5 * p.tau_x, 0.5 * p.tau_y);
    let mut state = JointState {
        u: u.clone(),
        v: v.clone(),
        trace: vec![TraceRow {
            iteration: 0,
            energy: e0,
            du_norm: 0.0,
            dv_norm: 0.0,
            tau_x: p.tau_x,
            tau_y: p.tau_y,
            inner_x: 0,
            inner_y: 0,
        }],
        iteration: 0,
        step_sum: 0.0,
        backtracks: 0,
        tau_x: p.tau_x,
        tau_y: p.tau_y,
        tau_x0: p.tau_x,
        tau_y0: p.tau_y,
    };
    let mut e_old = e0.total;
    let mut warm_x: Option<WarmStart> = None;
    let mut warm_y: Option<WarmStart> = None;

    for n in 1..=p.iters {
        // u-step with backtracking on τx.
        let mut tries = 0;
        let (x_out, ru, a, e_mid, du2) = loop {
            let out = x_step(prob, &u, &v, tx.value, warm_x.clone())?;
            let ru = prob.op.forward(&out.x);
            let a = prob.model.tensor(&ru);
            let e_mid = prob.energy_with(&out.x, &ru, &v, &a).total;
            let du2 = dist_sq(&out.x, &u);
            let margin = e_old - e_mid - wx * du2;
            if margin >= -slack {
                tx.record(margin, slack);
                break (out, ru, a, e_mid, du2);
            }
            tries += 1;
            state.backtracks += 1;
            if tries > MAX_BACKTRACKS {
                return Err(Error::Solver(format!(
                    "u-step failed to decrease the energy at iteration {n} (τx = {:e})",
                    tx.value
                )));
            }
            tx.grow();
        };
        warm_x = Some(x_out.warm.clone());
        let u_new = x_out.x;

        // v-step; exact in v, backtracking only guards inexact inner solves.
        let mut tries = 0;
        let (y_out, e_new, dv2) = loop {
            let out = y_step_with(prob, &ru, &a, &v, ty.value, warm_y.clone())?;
            let e_new = prob.energy_with(&u_new, &ru, &out.x, &a);
            let dv2 = dist_sq(&out.x, &v);
            let margin = e_mid - e_new.total - wy * dv2;
            if margin >= -slack {
                ty.record(margin, slack);
                break (out, e_new, dv2);
            }
            tries += 1;
            state.backtracks += 1;
            if tries > MAX_BACKTRACKS {
                return Err(Error::Solver(format!(
                    "v-step failed to decrease the energy at iteration {n} (τy = {:e})",
                    ty.value
                )));
            }
            ty.grow();
        };
        warm_y = Some(y_out.warm.clone());

        u = u_new;
        v = y_out.x;
        e_old = e_new.total;
        state.step_sum += du2 + dv2;
        state.iteration = n;
        state.tau_x = tx.value;
        state.tau_y = ty.value;
        state.trace.push(TraceRow {
            iteration: n,
            energy: e_new,
            du_norm: du2.sqrt(),
            dv_norm: dv2.sqrt(),
            tau_x: tx.value,
            tau_y: ty.value,
            inner_x: x_out.inner_iters,
            inner_y: y_out.inner_iters,
        });
        if opts.verbose {
            eprintln!("iter {n:4}  {}", e_new);
        }
        if opts.checkpoint_every > 0 && n % opts.checkpoint_every == 0 {
            if let Some(dir) = &opts.checkpoint_dir {
                std::fs::create_dir_all(dir)?;
                crate::io::write_field(&dir.join(format!("u_{n:04}.tomo")), &u)?;
                crate::io::write_field(&dir.join(format!("v_{n:04}.tomo")), &v)?;
            }
        }
    }
    state.u = u;
    state.v = v;
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::tv_reconstruct_from;
    use crate::energy::JointParams;
    use crate::phantoms::two_rings;
    use crate::regularizers::{div, tv};
    use crate::tomo::{make_limited_angle_mask, wedge_angles, ProjectionGeometry, SampleMask, XrayTransform};

    fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    fn problem(n: usize, full: bool, params: JointParams) -> (JointProblem, Array2<f64>) {
        let det = ProjectionGeometry::default_detector_count(n, n);
        let g = ProjectionGeometry::uniform(30, 0.0, 6.0, det, 1.0).unwrap();
        let mask = if full {
            SampleMask::full(g.clone())
        } else {
            make_limited_angle_mask(&g, &wedge_angles(&g, 0.0, 60.0)).unwrap()
        };
        let op = XrayTransform::new(g, n, n, 1.0).unwrap();
        let phantom = two_rings(n).values;
        let b = op.forward(&phantom);
        (JointProblem::new(op, &mask, &b, params).unwrap(), phantom)
    }

    fn small() -> JointParams {
        JointParams {
            alpha1: 0.25,
            alpha3: 0.3,
            beta1: 1.0,
            beta2: 1.0,
            beta3: 1.0,
            sigma: 1.5,
            iters: 4,
            inner_iters: 150,
            ..Default::default()
        }
    }

    fn start(prob: &JointProblem) -> (Array2<f64>, Array2<f64>) {
        let u = Array2::from_elem(prob.image_dim(), 0.2);
        let v = prob.op.forward(&u);
        (u, v)
    }

    #[test]
    fn zero_iterations_return_the_inputs() {
        let (prob, _) = problem(16, false, JointParams { iters: 0, ..small() });
        let (u, v) = start(&prob);
        let s = run_joint(&prob, &u, &v, &RunOptions::default()).unwrap();
        assert_eq!(s.u, u);
        assert_eq!(s.v, v);
        assert_eq!(s.trace.len(), 1);
        assert_eq!(s.step_sum, 0.0);
    }

    #[test]
    fn short_run_descends_and_stays_nonnegative() {
        let (prob, _) = problem(16, false, small());
        let (u, v) = start(&prob);
        let s = run_joint(&prob, &u, &v, &RunOptions::default()).unwrap();
        let e = s.energy_trace();
        let slack = 1e-8 * e[0].abs();
        assert!(e.windows(2).all(|w| w[1] <= w[0] + slack), "{e:?}");
        assert!(s.u.iter().all(|&x| x >= 0.0));
        assert!(s.step_sum <= s.step_sum_bound());
    }

    #[test]
    fn stiff_proximal_weight_freezes_u() {
        let (prob, _) = problem(16, false, small());
        let (u, v) = start(&prob);
        let out = x_step(&prob, &u, &v, 1e12, None).unwrap();
        assert!(max_abs_diff(&out.x, &u) <= 1e-5);
    }

    #[test]
    fn decoupled_u_step_is_tv_reconstruction() {
        let params = JointParams {
            alpha1: 0.0,
            alpha3: 0.0,
            beta2: 0.0,
            beta1: 0.5,
            inner_iters: 4000,
            inner_tol: 0.0,
            ..small()
        };
        let (prob, _) = problem(16, false, params);
        let (u, v) = start(&prob);
        let ours = x_step(&prob, &u, &v, 0.0, None).unwrap();
        let opts = PdhgOptions {
            max_iters: 4000,
            tol: 0.0,
            ..Default::default()
        };
        let mask = SampleMask::new(prob.op.geometry().clone(), prob.sampled.mapv(|s| s > 0.0)).unwrap();
        let reference = tv_reconstruct_from(&prob.op, prob.op_norm(), &mask, &prob.b, 0.5, &u, &opts).unwrap();
        let rel = (ours.objective - reference.objective).abs() / reference.objective;
        assert!(rel <= 1e-6, "{} vs {}", ours.objective, reference.objective);
    }

    #[test]
    fn y_step_without_dtv_is_a_weighted_average() {
        let params = JointParams { beta2: 0.0, ..small() };
        let (prob, _) = problem(16, false, params);
        let (u, _) = start(&prob);
        let v = Array2::from_shape_fn(prob.sinogram_dim(), |(i, j)| ((i * 7 + j * 3) % 11) as f64 * 0.1);
        let tau = 0.7;
        let out = y_step(&prob, &u, &v, tau, None).unwrap();
        let ru = prob.op.forward(&u);
        let p = &prob.params;
        let expected = Array2::from_shape_fn(v.dim(), |idx| {
            let (a1, s) = (prob.alpha1_field[idx], prob.sampled[idx]);
            (a1 * ru[idx] + p.alpha3 * s * prob.b[idx] + 2.0 * tau * v[idx]) / (a1 + p.alpha3 * s + 2.0 * tau)
        });
        assert!(max_abs_diff(&out.x, &expected) <= 1e-10);
    }

    /// Chambolle's projection iteration for `min ½‖v − c‖² + λ TV(v)`.
    fn chambolle(c: &Array2<f64>, lambda: f64, iters: usize) -> Array2<f64> {
        let mut p = grad(&Array2::zeros(c.dim()));
        let dt = 0.125;
        for _ in 0..iters {
            let g = grad(&(&div(&p) - &(c / lambda)));
            for (((px, py), gx), gy) in p.x.iter_mut().zip(p.y.iter_mut()).zip(&g.x).zip(&g.y) {
                let n = 1.0 + dt * (gx * gx + gy * gy).sqrt();
                *px = (*px + dt * gx) / n;
                *py = (*py + dt * gy) / n;
            }
        }
        c - &(lambda * &div(&p))
    }

    #[test]
    fn y_step_with_identity_tensor_is_tv_denoising() {
        // Equal weights on and off the acquired region make the fidelity
        // uniform, which is the setting of the reference algorithm.
        let params = JointParams {
            alpha1: 0.5,
            alpha3: 0.5,
            beta2: 0.2,
            inner_iters: 5000,
            inner_tol: 0.0,
            ..small()
        };
        let (prob, _) = problem(12, false, params);
        let (u, v) = start(&prob);
        let ru = prob.op.forward(&u);
        let a = TensorField::scaled_identity(v.dim(), 1.0);
        let out = y_step_with(&prob, &ru, &a, &v, 0.0, None).unwrap();
        let c = &prob.sampled * &prob.b + &(&prob.alpha1_field * &ru) / 0.5;
        let reference = chambolle(&c, 0.2 / 0.5, 20_000);
        let obj = |x: &Array2<f64>| 0.25 * dist_sq(x, &c) + 0.2 * tv(x);
        let (ours, theirs) = (obj(&out.x), obj(&reference));
        assert!((ours - theirs).abs() <= 1e-6 * theirs, "{ours} vs {theirs}");
        assert!(max_abs_diff(&out.x, &reference) <= 1e-2);
    }

    #[test]
    fn full_clean_data_recovers_the_rings() {
        let params = JointParams {
            beta1: 0.05,
            beta2: 0.05,
            iters: 10,
            ..small()
        };
        let (prob, phantom) = problem(24, true, params);
        let (u, v) = start(&prob);
        let s = run_joint(&prob, &u, &v, &RunOptions::default()).unwrap();
        let q = crate::metrics::psnr(&s.u, &phantom);
        assert!(q >= 30.0, "{q}");
    }
}
