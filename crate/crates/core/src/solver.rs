//! Kernelized mutual information and the projected-gradient InfoOT solvers.
//!
//! For a plan `Γ` the KDE joint density at sample pairs is `J = K_X Γ K_Yᵀ`
//! and the marginal densities are the Gram row sums `M_X`, `M_Y`. The
//! estimate is
//!
//! ```text
//! Î(Γ) = Σ_ij Γ_ij log( n m J_ij / (M_X[i] M_Y[j]) )
//! ```
//!
//! Each outer step linearizes `−λ Î` at the current plan and solves one
//! entropic transport problem with cost `C − λ ∇Î`. The step size of the
//! underlying KL mirror descent is fixed to `1/ε`, which makes the previous
//! plan drop out of the update.

use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{InfoOtError, Result};
use crate::kernels::{build_kde_model, joint_density, DistanceMatrix, KdeModel};
use crate::sinkhorn::{
    entropy, normalize_cost, sinkhorn_warm, transport_cost, CouplingMatrix, SinkhornSettings,
};

/// Joint-density entries are clamped here before division or log.
pub const DENSITY_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Weight of the mutual-information term.
    pub lambda: f64,
    /// Entropic regularization of every inner Sinkhorn solve.
    pub epsilon: f64,
    /// KDE bandwidth `h`, relative to each domain's median distance.
    pub bandwidth: f64,
    pub outer_iters: usize,
    /// Stop once `‖Γ_{t+1} − Γ_t‖₁` drops below this.
    pub outer_tol: f64,
    pub inner: SinkhornSettings,
    /// Divide the cross cost by its maximum before solving.
    pub normalize_cost: bool,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda: 100.0,
            epsilon: 1.0,
            bandwidth: 0.5,
            outer_iters: 50,
            outer_tol: 1e-6,
            inner: SinkhornSettings {
                max_iter: 10_000,
                ..SinkhornSettings::default()
            },
            normalize_cost: false,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(InfoOtError::InvalidInput(format!(
                "lambda must be nonnegative, got {}",
                self.lambda
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(InfoOtError::InvalidInput(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return Err(InfoOtError::InvalidInput(format!(
                "bandwidth must be positive, got {}",
                self.bandwidth
            )));
        }
        if self.outer_iters == 0 {
            return Err(InfoOtError::InvalidInput("outer_iters must be >= 1".into()));
        }
        if self.inner.max_iter == 0 || !(self.inner.tol > 0.0) {
            return Err(InfoOtError::InvalidInput(
                "inner Sinkhorn needs max_iter >= 1 and tol > 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct AlignmentResult {
    pub coupling: CouplingMatrix,
    /// `⟨Γ, C⟩ − λ Î(Γ)` after every outer iteration.
    pub objective_trace: Vec<f64>,
    /// `⟨Γ, C⟩ − λ Î(Γ) − ε H(Γ)`, the quantity each outer step majorizes.
    pub entropic_objective_trace: Vec<f64>,
    /// `Î(Γ)` after every outer iteration.
    pub mi_trace: Vec<f64>,
    pub inner_iterations: Vec<usize>,
    /// Outer iterations whose Sinkhorn solve hit `max_iter`.
    pub inner_failures: usize,
    /// Outer stopping rule met before `outer_iters` ran out.
    pub converged: bool,
    /// Factor the cross cost was divided by (1 when not normalized).
    pub cost_scale: f64,
    pub wall_time_secs: f64,
}

impl AlignmentResult {
    pub fn iterations(&self) -> usize {
        self.mi_trace.len()
    }

    /// Outer and every inner solve converged.
    pub fn fully_converged(&self) -> bool {
        self.converged && self.inner_failures == 0
    }

    pub fn summary(&self, config: &SolverConfig) -> AlignmentSummary {
        AlignmentSummary {
            config: *config,
            n: self.coupling.dim().0,
            m: self.coupling.dim().1,
            iterations: self.iterations(),
            converged: self.converged,
            inner_failures: self.inner_failures,
            inner_iterations: self.inner_iterations.clone(),
            objective_trace: self.objective_trace.clone(),
            entropic_objective_trace: self.entropic_objective_trace.clone(),
            mi_trace: self.mi_trace.clone(),
            marginal_violation: self.coupling.marginal_violation(),
            cost_scale: self.cost_scale,
            wall_time_secs: self.wall_time_secs,
        }
    }
}

/// JSON-facing view of a solve; the plan itself goes to CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlignmentSummary {
    pub config: SolverConfig,
    pub n: usize,
    pub m: usize,
    pub iterations: usize,
    pub converged: bool,
    pub inner_failures: usize,
    pub inner_iterations: Vec<usize>,
    pub objective_trace: Vec<f64>,
    pub entropic_objective_trace: Vec<f64>,
    pub mi_trace: Vec<f64>,
    pub marginal_violation: f64,
    pub cost_scale: f64,
    pub wall_time_secs: f64,
}

/// The additive constant the matrix-form gradient leaves out.
pub fn log_nm(n: usize, m: usize) -> f64 {
    ((n * m) as f64).ln()
}

/// `Î(Γ)` including the `log(nm)` term.
///
/// Accepts any nonnegative `n × m` matrix so callers can probe off the
/// transport polytope; zero entries contribute nothing.
pub fn mutual_information(model: &KdeModel, plan: ArrayView2<f64>) -> Result<f64> {
    let joint = joint_density(model, plan)?;
    let (mx, my) = (model.marginal_x(), model.marginal_y());
    let c = log_nm(model.n(), model.m());
    let mut total = 0.0;
    for ((i, j), &g) in plan.indexed_iter() {
        if g != 0.0 {
            let ratio = joint[[i, j]].max(DENSITY_FLOOR) / (mx[i] * my[j]);
            total += g * (c + ratio.ln());
        }
    }
    Ok(total)
}

/// Matrix-form gradient `log(J ⊘ M_X M_Yᵀ) + K_X (Γ ⊘ J) K_Yᵀ`.
///
/// The constant `log(nm)` of the exact partial derivative is omitted; add
/// [`log_nm`] to recover it. Cost is `O(n²m + nm²)`.
pub fn mi_gradient(model: &KdeModel, plan: ArrayView2<f64>) -> Result<Array2<f64>> {
    let joint = joint_density(model, plan)?.mapv(|v| v.max(DENSITY_FLOOR));
    let (mx, my) = (model.marginal_x(), model.marginal_y());

    let mut ratio = Array2::<f64>::zeros(plan.raw_dim());
    Zip::from(&mut ratio)
        .and(&plan)
        .and(&joint)
        .for_each(|r, &g, &j| *r = g / j);
    let kx = model.gram_x().values();
    let ky = model.gram_y().values();
    let mut grad = kx.dot(&ratio).dot(&ky.t());

    for ((i, j), v) in grad.indexed_iter_mut() {
        *v += (joint[[i, j]] / (mx[i] * my[j])).ln();
    }
    Ok(grad)
}

fn check_marginals(n: usize, m: usize, p: &Array1<f64>, q: &Array1<f64>) -> Result<()> {
    if p.len() != n || q.len() != m {
        return Err(InfoOtError::DimensionMismatch(format!(
            "marginals have lengths {} and {}, problem is {n}x{m}",
            p.len(),
            q.len()
        )));
    }
    Ok(())
}

/// Fused InfoOT on a prebuilt KDE model: `min ⟨Γ, C⟩ − λ Î(Γ)`.
pub fn solve_fused_infoot_with_model(
    cost: ArrayView2<f64>,
    model: &KdeModel,
    p: &Array1<f64>,
    q: &Array1<f64>,
    cfg: &SolverConfig,
) -> Result<AlignmentResult> {
    cfg.validate()?;
    let (n, m) = (model.n(), model.m());
    check_marginals(n, m, p, q)?;
    if cost.dim() != (n, m) {
        return Err(InfoOtError::DimensionMismatch(format!(
            "cross cost is {:?}, problem is {n}x{m}",
            cost.dim()
        )));
    }
    if cost.iter().any(|v| !v.is_finite()) {
        return Err(InfoOtError::NonFinite("cross cost".into()));
    }

    let start = Instant::now();
    let mut cost = cost.to_owned();
    let cost_scale = if cfg.normalize_cost {
        normalize_cost(&mut cost)
    } else {
        1.0
    };

    let mut plan = CouplingMatrix::product(p, q)?;
    let mut objective_trace = Vec::with_capacity(cfg.outer_iters);
    let mut entropic_objective_trace = Vec::with_capacity(cfg.outer_iters);
    let mut mi_trace = Vec::with_capacity(cfg.outer_iters);
    let mut inner_iterations = Vec::with_capacity(cfg.outer_iters);
    let mut inner_failures = 0;
    let mut converged = false;
    let mut duals = None;

    for _ in 0..cfg.outer_iters {
        let linear_cost = if cfg.lambda == 0.0 {
            cost.clone()
        } else {
            let grad = mi_gradient(model, plan.view())?;
            &cost - &(grad * cfg.lambda)
        };
        let start = duals
            .as_ref()
            .map(|(f, g): &(Vec<f64>, Vec<f64>)| (f.as_slice(), g.as_slice()));
        let (next, report) =
            sinkhorn_warm(linear_cost.view(), p, q, cfg.epsilon, &cfg.inner, start)?;
        inner_iterations.push(report.iterations);
        if !report.converged {
            inner_failures += 1;
        }
        duals = Some((report.potential_f, report.potential_g));

        let step: f64 = (next.values() - plan.values()).mapv(f64::abs).sum();
        plan = next;

        let mi = mutual_information(model, plan.view())?;
        mi_trace.push(mi);
        let objective = transport_cost(plan.view(), cost.view()) - cfg.lambda * mi;
        objective_trace.push(objective);
        entropic_objective_trace.push(objective - cfg.epsilon * entropy(plan.view()));

        if step < cfg.outer_tol {
            converged = true;
            break;
        }
    }

    Ok(AlignmentResult {
        coupling: plan,
        objective_trace,
        entropic_objective_trace,
        mi_trace,
        inner_iterations,
        inner_failures,
        converged,
        cost_scale,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

/// Fused InfoOT from intra-domain distances; KDE scales from the median
/// heuristic.
pub fn solve_fused_infoot(
    cost: ArrayView2<f64>,
    dx: &DistanceMatrix,
    dy: &DistanceMatrix,
    p: &Array1<f64>,
    q: &Array1<f64>,
    cfg: &SolverConfig,
) -> Result<AlignmentResult> {
    let model = build_kde_model(dx, dy, cfg.bandwidth)?;
    solve_fused_infoot_with_model(cost, &model, p, q, cfg)
}

/// Pure InfoOT: no cross cost, unit MI weight. Only intra-domain distances
/// are used, so the two domains may live in unrelated spaces.
pub fn solve_infoot(
    dx: &DistanceMatrix,
    dy: &DistanceMatrix,
    p: &Array1<f64>,
    q: &Array1<f64>,
    cfg: &SolverConfig,
) -> Result<AlignmentResult> {
    let model = build_kde_model(dx, dy, cfg.bandwidth)?;
    solve_infoot_with_model(&model, p, q, cfg)
}

pub fn solve_infoot_with_model(
    model: &KdeModel,
    p: &Array1<f64>,
    q: &Array1<f64>,
    cfg: &SolverConfig,
) -> Result<AlignmentResult> {
    let cfg = SolverConfig {
        lambda: 1.0,
        normalize_cost: false,
        ..*cfg
    };
    let zero = Array2::<f64>::zeros((model.n(), model.m()));
    solve_fused_infoot_with_model(zero.view(), model, p, q, &cfg)
}

/// Both sides of the small-bandwidth limit `Î(Γ) → −H(Γ) + log(nm)`:
/// returns `(Î(Γ) at h, −H(Γ) + log(nm))`.
pub fn limit_check(
    dx: &DistanceMatrix,
    dy: &DistanceMatrix,
    plan: ArrayView2<f64>,
    h: f64,
) -> Result<(f64, f64)> {
    for (d, name) in [(dx, "source"), (dy, "target")] {
        let v = d.values();
        let n = v.nrows();
        for i in 0..n {
            for j in (i + 1)..v.ncols() {
                if v[[i, j]] == 0.0 {
                    return Err(InfoOtError::InvalidInput(format!(
                        "{name} points {i} and {j} coincide; the limit needs distinct points"
                    )));
                }
            }
        }
    }
    let model = build_kde_model(dx, dy, h)?;
    let lhs = mutual_information(&model, plan)?;
    let rhs = -entropy(plan) + log_nm(model.n(), model.m());
    Ok((lhs, rhs))
}
