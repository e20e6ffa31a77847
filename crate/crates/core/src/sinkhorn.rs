//! Entropic optimal transport in the log domain.
//!
//! Iterates on scaled dual potentials `α = f/ε`, `β = g/ε`. Sweeps run on
//! the stabilized kernel `exp(−C/ε + α ⊕ β)` with scalings that are folded
//! back into the potentials whenever they drift, and fall back to
//! log-sum-exp reductions when that kernel underflows. `exp(−C/ε)` itself is
//! never formed, so `ε = 1e-3` against costs spanning ~10 stays finite.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{InfoOtError, Result};
use crate::kernels::validate_marginal;

/// Row/column sums must match the marginals to this tolerance.
pub const FEASIBILITY_TOL: f64 = 1e-8;
/// Total mass must be 1 to this tolerance.
pub const MASS_TOL: f64 = 1e-10;

/// Ratio between consecutive ε values of the continuation schedule.
const SCALING_FACTOR: f64 = 4.0;
/// Intermediate stages stop at this violation or budget.
const STAGE_TOL: f64 = 1e-4;
const STAGE_MAX_ITER: usize = 50;
/// Scaling sweeps in the final stage before switching to Newton steps.
const NEWTON_WARMUP: usize = 20;
const LINE_SEARCH_STEPS: usize = 40;
/// Scalings are folded into the potentials once `|ln u|` or `|ln v|`
/// exceeds this.
const ABSORB_LOG: f64 = 50.0;
const ARMIJO: f64 = 1e-4;

/// A transport plan together with the marginals it was built for.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrix {
    values: Array2<f64>,
    p: Array1<f64>,
    q: Array1<f64>,
}

impl CouplingMatrix {
    /// Validating constructor.
    pub fn new(values: Array2<f64>, p: Array1<f64>, q: Array1<f64>) -> Result<Self> {
        validate_marginal(&p, "row marginal")?;
        validate_marginal(&q, "column marginal")?;
        if values.dim() != (p.len(), q.len()) {
            return Err(InfoOtError::DimensionMismatch(format!(
                "coupling is {:?}, marginals need ({}, {})",
                values.dim(),
                p.len(),
                q.len()
            )));
        }
        let c = Self { values, p, q };
        c.check()?;
        Ok(c)
    }

    pub(crate) fn new_unchecked(values: Array2<f64>, p: Array1<f64>, q: Array1<f64>) -> Self {
        Self { values, p, q }
    }

    /// The independent plan `p qᵀ`.
    pub fn product(p: &Array1<f64>, q: &Array1<f64>) -> Result<Self> {
        validate_marginal(p, "row marginal")?;
        validate_marginal(q, "column marginal")?;
        let values = Array2::from_shape_fn((p.len(), q.len()), |(i, j)| p[i] * q[j]);
        Ok(Self::new_unchecked(values, p.clone(), q.clone()))
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn p(&self) -> &Array1<f64> {
        &self.p
    }

    pub fn q(&self) -> &Array1<f64> {
        &self.q
    }

    pub fn dim(&self) -> (usize, usize) {
        self.values.dim()
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    /// L1 distance of the row and column sums from `p` and `q`, summed.
    pub fn marginal_violation(&self) -> f64 {
        marginal_violation(self.values.view(), &self.p, &self.q)
    }

    /// Checks nonnegativity, per-marginal feasibility and unit mass.
    pub fn check(&self) -> Result<()> {
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(InfoOtError::NonFinite("coupling".into()));
        }
        if self.values.iter().any(|&v| v < 0.0) {
            return Err(InfoOtError::InvalidInput(
                "coupling has negative entries".into(),
            ));
        }
        for (i, row) in self.values.rows().into_iter().enumerate() {
            let s: f64 = row.sum();
            if (s - self.p[i]).abs() > FEASIBILITY_TOL {
                return Err(InfoOtError::InvalidInput(format!(
                    "row {i} sums to {s}, marginal is {}",
                    self.p[i]
                )));
            }
        }
        for (j, col) in self.values.columns().into_iter().enumerate() {
            let s: f64 = col.sum();
            if (s - self.q[j]).abs() > FEASIBILITY_TOL {
                return Err(InfoOtError::InvalidInput(format!(
                    "column {j} sums to {s}, marginal is {}",
                    self.q[j]
                )));
            }
        }
        let total = self.values.sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(InfoOtError::InvalidInput(format!(
                "coupling mass is {total}, expected 1"
            )));
        }
        Ok(())
    }
}

pub fn marginal_violation(plan: ArrayView2<f64>, p: &Array1<f64>, q: &Array1<f64>) -> f64 {
    let rows: f64 = plan
        .sum_axis(Axis(1))
        .iter()
        .zip(p.iter())
        .map(|(a, b)| (a - b).abs())
        .sum();
    let cols: f64 = plan
        .sum_axis(Axis(0))
        .iter()
        .zip(q.iter())
        .map(|(a, b)| (a - b).abs())
        .sum();
    rows + cols
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinkhornSettings {
    pub max_iter: usize,
    /// L1 marginal violation at which iteration stops.
    pub tol: f64,
}

impl Default for SinkhornSettings {
    fn default() -> Self {
        Self {
            max_iter: 1000,
            tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SinkhornReport {
    pub iterations: usize,
    /// Final L1 violation of both marginals.
    pub violation: f64,
    pub converged: bool,
    /// Dual potentials `f`, `g` in cost units.
    pub potential_f: Vec<f64>,
    pub potential_g: Vec<f64>,
}

fn log_sum_exp<I: Iterator<Item = f64> + Clone>(values: I) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Solves `min ⟨Γ, C⟩ − ε H(Γ)` over plans with marginals `p`, `q`.
///
/// Hitting `max_iter` is not an error: the plan is returned with
/// `converged = false` in the report.
pub fn sinkhorn(
    cost: ArrayView2<f64>,
    p: &Array1<f64>,
    q: &Array1<f64>,
    epsilon: f64,
    settings: &SinkhornSettings,
) -> Result<(CouplingMatrix, SinkhornReport)> {
    sinkhorn_warm(cost, p, q, epsilon, settings, None)
}

/// [`sinkhorn`] started from given dual potentials `(f, g)` in cost units,
/// e.g. those of a previous solve on a nearby cost. Without a start, ε is
/// annealed down from the cost range.
pub fn sinkhorn_warm(
    cost: ArrayView2<f64>,
    p: &Array1<f64>,
    q: &Array1<f64>,
    epsilon: f64,
    settings: &SinkhornSettings,
    start: Option<(&[f64], &[f64])>,
) -> Result<(CouplingMatrix, SinkhornReport)> {
    validate_marginal(p, "row marginal")?;
    validate_marginal(q, "column marginal")?;
    let (n, m) = cost.dim();
    if (n, m) != (p.len(), q.len()) {
        return Err(InfoOtError::DimensionMismatch(format!(
            "cost is {n}x{m}, marginals have lengths {} and {}",
            p.len(),
            q.len()
        )));
    }
    if cost.iter().any(|v| !v.is_finite()) {
        return Err(InfoOtError::NonFinite("cost matrix".into()));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(InfoOtError::InvalidInput(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    if !(settings.tol > 0.0) {
        return Err(InfoOtError::InvalidInput(
            "tolerance must be positive".into(),
        ));
    }

    // Continuation in ε: geometric steps down from the cost range, carrying
    // the dual potentials (in cost units) between stages. The final stage
    // alternates scaling sweeps with Newton steps on the dual.
    let mut schedule = Vec::new();
    let (mut f, mut g) = match start {
        Some((f0, g0))
            if f0.len() == n && g0.len() == m && f0.iter().chain(g0).all(|v| v.is_finite()) =>
        {
            (Array1::from(f0.to_vec()), Array1::from(g0.to_vec()))
        }
        _ => {
            let range = cost.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                - cost.iter().cloned().fold(f64::INFINITY, f64::min);
            let mut e = range;
            while e > epsilon * SCALING_FACTOR {
                schedule.push(e);
                e /= SCALING_FACTOR;
            }
            (Array1::zeros(n), Array1::zeros(m))
        }
    };
    schedule.push(epsilon);

    let last = schedule.len() - 1;
    let mut state = None;
    for (stage, &eps_stage) in schedule.iter().enumerate() {
        let mut st = LogState::new(cost, p, q, eps_stage, &f, &g);
        if stage == last {
            st.solve(settings.tol, settings.max_iter);
            st.match_columns();
        } else {
            st.sweeps(settings.tol.max(STAGE_TOL), STAGE_MAX_ITER);
        }
        f = &st.alpha * eps_stage;
        g = &st.beta * eps_stage;
        state = Some(st);
    }
    let state = state.expect("schedule is never empty");

    let plan = state.plan();
    let violation = marginal_violation(plan.view(), p, q);
    let report = SinkhornReport {
        iterations: state.iterations,
        violation,
        converged: violation <= settings.tol,
        potential_f: f.to_vec(),
        potential_g: g.to_vec(),
    };
    Ok((
        CouplingMatrix::new_unchecked(plan, p.clone(), q.clone()),
        report,
    ))
}

/// Scaled dual potentials `α = f/ε`, `β = g/ε` for one ε, with
/// `Γ_ij = exp(α_i + β_j + S_ij)` and `S = −C/ε`.
struct LogState<'a> {
    scaled: Array2<f64>,
    scaled_t: Array2<f64>,
    p: &'a Array1<f64>,
    q: &'a Array1<f64>,
    log_p: Array1<f64>,
    log_q: Array1<f64>,
    alpha: Array1<f64>,
    beta: Array1<f64>,
    iterations: usize,
}

impl<'a> LogState<'a> {
    fn new(
        cost: ArrayView2<f64>,
        p: &'a Array1<f64>,
        q: &'a Array1<f64>,
        epsilon: f64,
        f: &Array1<f64>,
        g: &Array1<f64>,
    ) -> Self {
        let scaled = cost.mapv(|c| -c / epsilon);
        let scaled_t = scaled.t().as_standard_layout().into_owned();
        Self {
            scaled,
            scaled_t,
            p,
            q,
            log_p: p.mapv(f64::ln),
            log_q: q.mapv(f64::ln),
            alpha: f / epsilon,
            beta: g / epsilon,
            iterations: 0,
        }
    }

    fn plan(&self) -> Array2<f64> {
        plan_from(&self.scaled, &self.alpha, &self.beta)
    }

    /// Row and column sweeps until the row violation is at most `tol` or
    /// `budget` sweeps ran. Columns are exact after every sweep.
    fn sweeps(&mut self, tol: f64, budget: usize) -> bool {
        let (n, m) = self.scaled.dim();
        let mut kernel = self.kernel();
        let mut u = Array1::<f64>::ones(n);
        let mut v = Array1::<f64>::ones(m);
        let mut done = 0;
        loop {
            let mut kv = kernel.dot(&v);
            if !usable(&kv) || !moderate(&u) || !moderate(&v) {
                self.absorb(&mut u, &mut v);
                kernel = self.kernel();
                kv = kernel.sum_axis(Axis(1));
                if !usable(&kv) {
                    return self.log_sweeps(tol, budget - done, done);
                }
            }
            if done > 0 || self.iterations > 0 {
                let row_violation: f64 = (0..n).map(|i| (u[i] * kv[i] - self.p[i]).abs()).sum();
                if row_violation <= tol {
                    self.absorb(&mut u, &mut v);
                    return true;
                }
            }
            if done == budget {
                self.absorb(&mut u, &mut v);
                return false;
            }
            u = self.p / &kv;
            let ktu = kernel.t().dot(&u);
            if usable(&ktu) {
                v = self.q / &ktu;
            } else {
                self.absorb(&mut u, &mut v);
                self.match_columns();
                kernel = self.kernel();
            }
            done += 1;
            self.iterations += 1;
        }
    }

    /// `exp(S + α ⊕ β)`, the current plan.
    fn kernel(&self) -> Array2<f64> {
        plan_from(&self.scaled, &self.alpha, &self.beta)
    }

    fn absorb(&mut self, u: &mut Array1<f64>, v: &mut Array1<f64>) {
        self.alpha += &u.mapv(f64::ln);
        self.beta += &v.mapv(f64::ln);
        u.fill(1.0);
        v.fill(1.0);
    }

    /// [`Self::sweeps`] with log-sum-exp reductions, for kernels that
    /// underflow. `done` sweeps of the budget were already spent.
    fn log_sweeps(&mut self, tol: f64, budget: usize, done: usize) -> bool {
        let n = self.scaled.nrows();
        let mut row_lse = Array1::<f64>::zeros(n);
        let mut spent = 0;
        loop {
            for (i, row) in self.scaled.rows().into_iter().enumerate() {
                row_lse[i] = log_sum_exp(row.iter().zip(self.beta.iter()).map(|(s, b)| s + b));
            }
            if done + spent > 0 || self.iterations > 0 {
                let row_violation: f64 = (0..n)
                    .map(|i| ((self.alpha[i] + row_lse[i]).exp() - self.p[i]).abs())
                    .sum();
                if row_violation <= tol {
                    return true;
                }
            }
            if spent == budget {
                return false;
            }
            for i in 0..n {
                self.alpha[i] = self.log_p[i] - row_lse[i];
            }
            self.match_columns();
            spent += 1;
            self.iterations += 1;
        }
    }

    /// Column half-sweep: column sums become exact, so the total mass is
    /// `Σ q` to rounding.
    fn match_columns(&mut self) {
        for (j, col) in self.scaled_t.rows().into_iter().enumerate() {
            let lse = log_sum_exp(col.iter().zip(self.alpha.iter()).map(|(s, a)| s + a));
            self.beta[j] = self.log_q[j] - lse;
        }
    }

    /// Warm-up sweeps, Newton polishing, then plain sweeps for whatever
    /// budget is left if Newton stalls.
    fn solve(&mut self, tol: f64, budget: usize) {
        let warmup = budget.min(NEWTON_WARMUP);
        if self.sweeps(tol, warmup) {
            return;
        }
        while self.iterations < budget {
            match self.newton_step(tol) {
                NewtonOutcome::Converged => return,
                NewtonOutcome::Progress => {}
                NewtonOutcome::Stalled => break,
            }
        }
        let left = budget.saturating_sub(self.iterations);
        self.sweeps(tol, left);
    }

    /// Dual objective in scaled units, `⟨α,p⟩ + ⟨β,q⟩ − Σ Γ`, together with
    /// the plan it was evaluated at.
    fn dual(&self, alpha: &Array1<f64>, beta: &Array1<f64>) -> (f64, Array2<f64>) {
        let plan = plan_from(&self.scaled, alpha, beta);
        let value = alpha.dot(self.p) + beta.dot(self.q) - plan.sum();
        (value, plan)
    }

    fn newton_step(&mut self, tol: f64) -> NewtonOutcome {
        let (value, plan) = self.dual(&self.alpha, &self.beta);
        let r = plan.sum_axis(Axis(1));
        let c = plan.sum_axis(Axis(0));
        let grad_a = self.p - &r;
        let grad_b = self.q - &c;
        let violation = grad_a.mapv(f64::abs).sum() + grad_b.mapv(f64::abs).sum();
        if violation <= tol {
            return NewtonOutcome::Converged;
        }
        let Some((da, db)) = newton_direction(plan.view(), &r, &c, &grad_a, &grad_b) else {
            return NewtonOutcome::Stalled;
        };
        let slope = grad_a.dot(&da) + grad_b.dot(&db);
        if !(slope > 0.0) {
            return NewtonOutcome::Stalled;
        }
        let mut t = 1.0;
        for _ in 0..LINE_SEARCH_STEPS {
            let alpha = &self.alpha + &(&da * t);
            let beta = &self.beta + &(&db * t);
            let (trial, trial_plan) = self.dual(&alpha, &beta);
            let v = marginal_violation(trial_plan.view(), self.p, self.q);
            // Close to the optimum the dual gain drops below rounding of its
            // value; a strict drop in violation is then the usable signal.
            let sufficient = trial.is_finite()
                && (trial > value + ARMIJO * t * slope || v < (1.0 - ARMIJO * t) * violation);
            if sufficient {
                self.alpha = alpha;
                self.beta = beta;
                self.iterations += 1;
                return if v <= tol {
                    NewtonOutcome::Converged
                } else {
                    NewtonOutcome::Progress
                };
            }
            t *= 0.5;
        }
        NewtonOutcome::Stalled
    }
}

enum NewtonOutcome {
    Converged,
    Progress,
    Stalled,
}

fn usable(sums: &Array1<f64>) -> bool {
    sums.iter().all(|&s| s > f64::MIN_POSITIVE && s.is_finite())
}

fn moderate(scaling: &Array1<f64>) -> bool {
    scaling.iter().all(|&s| s.ln().abs() <= ABSORB_LOG)
}

fn plan_from(scaled: &Array2<f64>, alpha: &Array1<f64>, beta: &Array1<f64>) -> Array2<f64> {
    let mut plan = scaled.clone();
    for ((i, j), v) in plan.indexed_iter_mut() {
        *v = (alpha[i] + beta[j] + *v).exp();
    }
    plan
}

/// Solves the dual Newton system
///
/// ```text
/// diag(r) δα + Γ δβ      = p − r
/// Γᵀ δα      + diag(c) δβ = q − c
/// ```
///
/// through the Schur complement on the shorter side. The system is singular
/// along `(1, −1)`; the first potential of the eliminated side is pinned.
fn newton_direction(
    plan: ArrayView2<f64>,
    r: &Array1<f64>,
    c: &Array1<f64>,
    grad_a: &Array1<f64>,
    grad_b: &Array1<f64>,
) -> Option<(Array1<f64>, Array1<f64>)> {
    if plan.nrows() > plan.ncols() {
        let (db, da) = newton_direction(plan.t(), c, r, grad_b, grad_a)?;
        return Some((da, db));
    }
    let n = plan.nrows();
    if c.iter().any(|&v| !(v > 0.0)) {
        return None;
    }
    // A = diag(r) − Γ diag(1/c) Γᵀ is the Laplacian of the weights
    // w_ik = Σ_j Γ_ij Γ_kj / c_j. Near a permutation plan the direct formula
    // cancels catastrophically on the diagonal, so rebuild the diagonal as
    // the off-diagonal row sum instead.
    let scaled_cols = &plan / &c.view().insert_axis(Axis(0));
    let mut a = -scaled_cols.dot(&plan.t());
    for i in 0..n {
        a[[i, i]] = 0.0;
        let off: f64 = a.row(i).sum();
        a[[i, i]] = -off;
    }
    let b = grad_a - &scaled_cols.dot(grad_b);

    let mut da = Array1::<f64>::zeros(n);
    if n > 1 {
        let reduced = a.slice(ndarray::s![1.., 1..]).to_owned();
        let rhs = b.slice(ndarray::s![1..]).to_owned();
        let sol = crate::linalg::cholesky_solve(reduced, rhs)?;
        da.slice_mut(ndarray::s![1..]).assign(&sol);
    }
    let db = (grad_b - &plan.t().dot(&da)) / c;
    Some((da, db))
}

/// `H(Γ) = −Σ Γ_ij log Γ_ij` with `0 log 0 = 0`.
pub fn entropy(plan: ArrayView2<f64>) -> f64 {
    -plan
        .iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| v * v.ln())
        .sum::<f64>()
}

/// `⟨Γ, C⟩`.
pub fn transport_cost(plan: ArrayView2<f64>, cost: ArrayView2<f64>) -> f64 {
    plan.iter().zip(cost.iter()).map(|(g, c)| g * c).sum()
}

/// Divide a cost matrix by its largest entry. Returns the factor used
/// (1 when the maximum is not positive).
pub fn normalize_cost(cost: &mut Array2<f64>) -> f64 {
    let max = cost.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max > 0.0 && max.is_finite() {
        cost.mapv_inplace(|c| c / max);
        max
    } else {
        1.0
    }
}
