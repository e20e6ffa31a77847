//! Mapping source samples into the target domain.
//!
//! The barycentric map averages targets with the plan's row weights. The
//! conditional map averages them with kernelized importance weights
//!
//! ```text
//! w_j(x) = f̂_Γ(x, y_j) / (f̂_X(x) f̂_Y(y_j))
//! f̂_Γ(x, y_j) = Σ_kl Γ_kl K(d(x, x_k)) K(d(y_j, y_l))
//! ```
//!
//! which are defined for any `x`, so unseen queries can be mapped and scored.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{InfoOtError, Result};
use crate::kernels::{euclidean, KdeModel, PointSet};
use crate::parallel::build_rows;
use crate::solver::DENSITY_FLOOR;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ProjectionMode {
    Barycentric,
    #[default]
    Conditional,
}

impl std::str::FromStr for ProjectionMode {
    type Err = InfoOtError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "barycentric" => Ok(Self::Barycentric),
            "conditional" => Ok(Self::Conditional),
            other => Err(InfoOtError::InvalidInput(format!(
                "unknown projection mode `{other}`, expected barycentric or conditional"
            ))),
        }
    }
}

/// Which source-side points to score or map.
#[derive(Debug, Clone, PartialEq)]
pub enum Queries {
    /// Rows of the training source set.
    InSample(Vec<usize>),
    /// New coordinates in the source space (euclidean only).
    Points(Array2<f64>),
    /// New queries given as distances to every training source point.
    Distances(Array2<f64>),
}

impl Queries {
    pub fn all(n: usize) -> Self {
        Self::InSample((0..n).collect())
    }

    pub fn len(&self) -> usize {
        match self {
            Self::InSample(idx) => idx.len(),
            Self::Points(p) => p.nrows(),
            Self::Distances(d) => d.nrows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_in_sample(&self) -> bool {
        matches!(self, Self::InSample(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct ProjectionRequest {
    pub mode: ProjectionMode,
    /// Conditional-mode bandwidth; `None` reuses the solver bandwidth.
    pub bandwidth: Option<f64>,
}

impl ProjectionRequest {
    pub fn barycentric() -> Self {
        Self {
            mode: ProjectionMode::Barycentric,
            bandwidth: None,
        }
    }

    pub fn conditional(bandwidth: Option<f64>) -> Self {
        Self {
            mode: ProjectionMode::Conditional,
            bandwidth,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(h) = self.bandwidth {
            if !(h > 0.0 && h.is_finite()) {
                return Err(InfoOtError::InvalidInput(format!(
                    "projection bandwidth must be positive, got {h}"
                )));
            }
        }
        Ok(())
    }

    /// Map `queries` into the target space with the configured mode.
    pub fn project(
        &self,
        model: &KdeModel,
        plan: ArrayView2<f64>,
        targets: &PointSet,
        queries: &Queries,
    ) -> Result<Array2<f64>> {
        self.validate()?;
        match (self.mode, queries) {
            (ProjectionMode::Barycentric, Queries::InSample(idx)) => {
                let all = barycentric_project(plan, targets)?;
                Ok(all.select(ndarray::Axis(0), idx))
            }
            (ProjectionMode::Barycentric, _) => Err(InfoOtError::InvalidInput(
                "barycentric projection is only defined for in-sample queries".into(),
            )),
            (ProjectionMode::Conditional, q) => {
                conditional_project(model, plan, q, targets, self.bandwidth)
            }
        }
    }
}

/// Importance weights, one row per query and one column per target.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    values: Array2<f64>,
    normalized: bool,
}

impl ScoreMatrix {
    /// Wrap precomputed unnormalized scores.
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(InfoOtError::InvalidInput(
                "scores must be finite and nonnegative".into(),
            ));
        }
        Ok(Self {
            values,
            normalized: false,
        })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Divide each row by its sum.
    pub fn normalized(mut self) -> Self {
        if !self.normalized {
            for mut row in self.values.rows_mut() {
                let z: f64 = row.iter().sum();
                row.mapv_inplace(|v| v / z);
            }
            self.normalized = true;
        }
        self
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }
}

/// Row `i` becomes `Σ_j Γ_ij y_j / Σ_j Γ_ij`.
pub fn barycentric_project(plan: ArrayView2<f64>, targets: &PointSet) -> Result<Array2<f64>> {
    let (n, m) = plan.dim();
    if m != targets.len() {
        return Err(InfoOtError::DimensionMismatch(format!(
            "plan has {m} columns but there are {} targets",
            targets.len()
        )));
    }
    let y = targets.points();
    let d = y.ncols();
    let mut out = Array2::zeros((n, d));
    for (i, row) in plan.rows().into_iter().enumerate() {
        let mass: f64 = row.iter().sum();
        if !(mass > 0.0) {
            return Err(InfoOtError::Degenerate(format!(
                "plan row {i} carries no mass"
            )));
        }
        let mut acc = out.row_mut(i);
        for (j, &g) in row.iter().enumerate() {
            acc.scaled_add(g, &y.row(j));
        }
        acc.mapv_inplace(|v| v / mass);
    }
    Ok(out)
}

/// Unnormalized importance weights `w_j(x)` for every query.
///
/// Query kernels reuse the training source scale. `bandwidth` overrides the
/// model's bandwidth for both domains.
pub fn importance_weights(
    model: &KdeModel,
    plan: ArrayView2<f64>,
    queries: &Queries,
    bandwidth: Option<f64>,
) -> Result<ScoreMatrix> {
    model.check_plan_shape(&plan)?;
    let rebuilt;
    let model = match bandwidth {
        Some(h) if h != model.bandwidth() => {
            rebuilt = model.with_bandwidth(h)?;
            &rebuilt
        }
        _ => model,
    };
    let kernel_rows = query_kernel_rows(model, queries)?;

    // (Γ K_Yᵀ)[k, j] = Σ_l Γ_kl K_Y[j, l]
    let carried = plan.dot(&model.gram_y().values().t());
    let my = model.marginal_y();
    let m = model.m();
    let values = build_rows(kernel_rows.nrows(), m, |q, row| {
        let kx = kernel_rows.row(q);
        let fx: f64 = kx.iter().sum();
        for (j, slot) in row.iter_mut().enumerate() {
            let joint: f64 = kx.iter().zip(carried.column(j)).map(|(a, b)| a * b).sum();
            *slot = joint.max(DENSITY_FLOOR) / (fx * my[j]);
        }
    });
    Ok(ScoreMatrix {
        values,
        normalized: false,
    })
}

/// Source kernel values `K(d(x, x_k))` for each query, one row per query.
///
/// Out-of-sample rows are divided by their largest entry so that far
/// queries do not underflow to an all-zero row; the weights only depend on
/// ratios within a row.
fn query_kernel_rows(model: &KdeModel, queries: &Queries) -> Result<Array2<f64>> {
    let n = model.n();
    let h = model.bandwidth();
    let s = h * model.scale_x();
    let shifted = |dists: ArrayView1<f64>, row: &mut [f64]| {
        let dmin = dists.iter().cloned().fold(f64::INFINITY, f64::min);
        let base = dmin * dmin / (2.0 * s * s);
        for (slot, &d) in row.iter_mut().zip(dists) {
            *slot = (base - d * d / (2.0 * s * s)).exp();
        }
    };
    match queries {
        Queries::InSample(idx) => {
            if let Some(&bad) = idx.iter().find(|&&i| i >= n) {
                return Err(InfoOtError::InvalidInput(format!(
                    "query index {bad} out of range for {n} source points"
                )));
            }
            Ok(model.gram_x().values().select(ndarray::Axis(0), idx))
        }
        Queries::Points(points) => {
            let train = model
                .source_points()
                .ok_or(InfoOtError::OutOfSampleUnsupported)?;
            if points.ncols() != train.ncols() {
                return Err(InfoOtError::DimensionMismatch(format!(
                    "queries have {} features, training source has {}",
                    points.ncols(),
                    train.ncols()
                )));
            }
            if points.iter().any(|v| !v.is_finite()) {
                return Err(InfoOtError::NonFinite("query points".into()));
            }
            Ok(build_rows(points.nrows(), n, |q, row| {
                let x = points.row(q);
                let dists: Array1<f64> =
                    train.rows().into_iter().map(|t| euclidean(x, t)).collect();
                shifted(dists.view(), row);
            }))
        }
        Queries::Distances(dists) => {
            if dists.ncols() != n {
                return Err(InfoOtError::DimensionMismatch(format!(
                    "query distances have {} columns, training source has {n} points",
                    dists.ncols()
                )));
            }
            if dists.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(InfoOtError::InvalidInput(
                    "query distances must be finite and nonnegative".into(),
                ));
            }
            Ok(build_rows(dists.nrows(), n, |q, row| {
                shifted(dists.row(q), row)
            }))
        }
    }
}

/// `x ↦ Σ_j w̃_j(x) y_j` with row-normalized importance weights.
pub fn conditional_project(
    model: &KdeModel,
    plan: ArrayView2<f64>,
    queries: &Queries,
    targets: &PointSet,
    bandwidth: Option<f64>,
) -> Result<Array2<f64>> {
    if targets.len() != model.m() {
        return Err(InfoOtError::DimensionMismatch(format!(
            "model has {} targets, got {}",
            model.m(),
            targets.len()
        )));
    }
    let weights = importance_weights(model, plan, queries, bandwidth)?.normalized();
    Ok(weights.values().dot(targets.points()))
}

/// One ranked retrieval result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalRecord {
    pub query_id: usize,
    pub target_ids: Vec<usize>,
    pub scores: Vec<f64>,
}

/// Top `k` targets per query by descending score; equal scores keep the
/// lower target index first.
pub fn top_k(scores: &ScoreMatrix, k: usize) -> Result<Vec<RetrievalRecord>> {
    let m = scores.values.ncols();
    if k == 0 || k > m {
        return Err(InfoOtError::InvalidInput(format!(
            "k must be in 1..={m}, got {k}"
        )));
    }
    Ok(scores
        .values
        .rows()
        .into_iter()
        .enumerate()
        .map(|(query_id, row)| {
            let mut order: Vec<usize> = (0..m).collect();
            order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
            order.truncate(k);
            RetrievalRecord {
                query_id,
                scores: order.iter().map(|&j| row[j]).collect(),
                target_ids: order,
            }
        })
        .collect())
}
