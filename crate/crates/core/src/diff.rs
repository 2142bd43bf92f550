//! Blackbox differentiation of matching solvers.
//!
//! The discrete solver is piecewise constant in its similarity inputs, so
//! its true gradient is zero almost everywhere. The layer instead
//! differentiates a piecewise-linear interpolation of the loss: the forward
//! pass runs the solver once and saves its inputs and outputs; the backward
//! pass re-runs the solver once on similarities perturbed *against* the
//! incoming loss gradient (`sv - lambda * dL/dv`, edge similarities
//! unperturbed since the loss ignores `e`) and returns
//! `(1/lambda) * (saved solution - perturbed solution)` for both vectors.
//!
//! Sign convention: the interpolation scheme is usually stated for solvers
//! that *minimize* a cost `w . y` and perturbs `w + lambda * dL/dy`. Our
//! solvers maximize `sv . v`, i.e. minimize the cost `w = -sv`, so the
//! perturbation and the returned gradient both change sign under the
//! substitution. Perturbing a maximizer along `+dL/dv` instead rewards the
//! pairs the loss wants removed, and from an uninformative start the
//! perturbed optimum then equals the saved one, which makes every gradient
//! vanish identically.

use crate::error::{Error, Result};
use crate::graph::{Assignment, MatchingInstance};
use crate::score::{hamming_loss, hamming_loss_grad, score_linear};
use crate::sinkhorn::{discretize, sinkhorn_solve, SinkhornConfig};
use crate::solver::{solve_gms, solve_gms_star, QualityLevel, SolverResult};

/// Interpolation range `lambda > 0`: small values stay faithful to the
/// original loss, large values make the gradient informative further away.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lambda {
    lambda: f64,
}

impl Lambda {
    pub fn new(lambda: f64) -> Result<Self> {
        if !lambda.is_finite() || lambda <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "lambda must be finite and > 0, got {lambda}"
            )));
        }
        Ok(Lambda { lambda })
    }

    pub fn value(&self) -> f64 {
        self.lambda
    }
}

/// Anything that maps a matching instance to a feasible assignment. The
/// layer is solver-agnostic; implementations decide how hard they try.
pub trait BlackboxSolver {
    fn solve(&self, instance: &MatchingInstance) -> Result<SolverResult>;
}

/// Exact (or quality-bounded) branch-and-bound solver.
#[derive(Debug, Clone, Copy)]
pub struct GmsSolver {
    pub quality: QualityLevel,
}

impl BlackboxSolver for GmsSolver {
    fn solve(&self, instance: &MatchingInstance) -> Result<SolverResult> {
        solve_gms(instance, self.quality)
    }
}

/// Topology-relaxed solver (independent node and edge assignments).
#[derive(Debug, Clone, Copy, Default)]
pub struct GmsStarSolver;

impl BlackboxSolver for GmsStarSolver {
    fn solve(&self, instance: &MatchingInstance) -> Result<SolverResult> {
        solve_gms_star(instance)
    }
}

/// Continuous node-only pipeline: Sinkhorn on the node table, then
/// discretization; edges are never matched. As a heuristic it carries no
/// bound information, so the result reports `lb = ub` and is never marked
/// root-optimal.
#[derive(Debug, Clone, Default)]
pub struct SinkhornSolver {
    pub config: SinkhornConfig,
}

impl BlackboxSolver for SinkhornSolver {
    fn solve(&self, instance: &MatchingInstance) -> Result<SolverResult> {
        let shape = instance.shape();
        let soft = sinkhorn_solve(&instance.sv_matrix(), &self.config)?;
        let v = discretize(&soft)?;
        let assignment = Assignment::new(v, vec![false; shape.edge_pairs()], shape)?;
        let score = score_linear(instance, &assignment)?;
        Ok(SolverResult {
            assignment,
            lb: score,
            ub: score,
            gap: 0.0,
            tree_nodes_expanded: 0,
            root_optimal: false,
        })
    }
}

/// Forward state saved for the backward pass: the solved assignment and the
/// similarities it was solved on (kept as a full instance so the perturbed
/// solve can run on the same graph pair).
#[derive(Debug, Clone)]
pub struct LayerContext {
    instance: MatchingInstance,
    v: Vec<bool>,
    e: Vec<bool>,
}

impl LayerContext {
    pub fn saved_v(&self) -> &[bool] {
        &self.v
    }

    pub fn saved_e(&self) -> &[bool] {
        &self.e
    }

    pub fn saved_sv(&self) -> &[f64] {
        self.instance.sv()
    }

    pub fn saved_se(&self) -> &[f64] {
        self.instance.se()
    }
}

/// Forward pass: one solver call; saves `v, e, sv, se` for backward.
pub fn forward(
    instance: &MatchingInstance,
    solver: &dyn BlackboxSolver,
) -> Result<(SolverResult, LayerContext)> {
    let result = solver.solve(instance)?;
    let ctx = LayerContext {
        instance: instance.clone(),
        v: result.assignment.v().to_vec(),
        e: result.assignment.e().to_vec(),
    };
    Ok((result, ctx))
}

/// Backward pass: one solver call on the perturbed similarities
/// `sv_lambda = sv - lambda * grad_v` (edge similarities unperturbed), then
/// `d_sv = (v - v_lambda) / lambda` and `d_se = (e - e_lambda) / lambda`.
pub fn backward(
    ctx: &LayerContext,
    grad_v: &[f64],
    lambda: Lambda,
    solver: &dyn BlackboxSolver,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if grad_v.len() != ctx.v.len() {
        return Err(Error::DimensionMismatch(format!(
            "grad_v has length {}, expected {}",
            grad_v.len(),
            ctx.v.len()
        )));
    }
    if !grad_v.iter().all(|g| g.is_finite()) {
        return Err(Error::NonFinite("grad_v"));
    }
    let lam = lambda.value();
    let sv_lambda: Vec<f64> = ctx
        .instance
        .sv()
        .iter()
        .zip(grad_v)
        .map(|(&s, &g)| s - lam * g)
        .collect();
    let perturbed = ctx
        .instance
        .with_similarities(sv_lambda, ctx.instance.se().to_vec())?;
    let result = solver.solve(&perturbed)?;

    let d_sv = diff_scaled(&ctx.v, result.assignment.v(), lam);
    let d_se = diff_scaled(&ctx.e, result.assignment.e(), lam);
    Ok((d_sv, d_se))
}

fn diff_scaled(saved: &[bool], perturbed: &[bool], lambda: f64) -> Vec<f64> {
    saved
        .iter()
        .zip(perturbed)
        .map(|(&a, &b)| (f64::from(u8::from(a)) - f64::from(u8::from(b))) / lambda)
        .collect()
}

/// The interpolated loss the backward pass differentiates exactly:
/// `L_lambda = L(v_lambda) + (1/lambda) * [SL(v, e) - SL(v_lambda, e_lambda)]`
/// with both scores evaluated on the original similarities and `(v_lambda,
/// e_lambda)` from the perturbed solve (see the module docs for the sign
/// convention). Two solver calls. For exact solvers the bracket is
/// nonnegative and `L(v_lambda) <= L_lambda <= L(v)`.
pub fn interpolated_loss(
    instance: &MatchingInstance,
    v_gt: &[bool],
    lambda: Lambda,
    solver: &dyn BlackboxSolver,
) -> Result<f64> {
    let (result, ctx) = forward(instance, solver)?;
    let grad = hamming_loss_grad(v_gt, ctx.saved_v())?;
    let lam = lambda.value();
    let sv_lambda: Vec<f64> = instance
        .sv()
        .iter()
        .zip(&grad)
        .map(|(&s, &g)| s - lam * g)
        .collect();
    let perturbed_instance = instance.with_similarities(sv_lambda, instance.se().to_vec())?;
    let perturbed = solver.solve(&perturbed_instance)?;

    let sl_saved = score_linear(instance, &result.assignment)?;
    let sl_perturbed = score_linear(instance, &perturbed.assignment)?;
    let loss_at_perturbed = hamming_loss(v_gt, perturbed.assignment.v())?;
    Ok(loss_at_perturbed + (sl_saved - sl_perturbed) / lam)
}
