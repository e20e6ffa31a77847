//! Pairwise distances, Gaussian Gram matrices and kernel density estimates.
//!
//! Densities are never normalized: only ratios of joint to marginal densities
//! are consumed downstream, so the kernel normalizer cancels. A Gram entry is
//! the raw value `exp(-d² / (2 h² σ²))`, which peaks at exactly 1.
//!
//! Row sums are accumulated left to right in index order. Rows may be built
//! in parallel, but each row is a single sequential reduction, so every value
//! here is bitwise reproducible regardless of thread count.

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{InfoOtError, Result};
use crate::parallel::build_rows;

/// Tolerance on `Σ weights = 1`.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;
/// Tolerance on symmetry of intra-domain matrices.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Samples of one domain.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    points: Array2<f64>,
    labels: Option<Vec<usize>>,
    weights: Array1<f64>,
}

impl PointSet {
    /// Points with uniform weights `1/n` and no labels.
    pub fn new(points: Array2<f64>) -> Result<Self> {
        let n = points.nrows();
        if n == 0 || points.ncols() == 0 {
            return Err(InfoOtError::InvalidInput(format!(
                "point set must have n >= 1 and d >= 1, got {}x{}",
                n,
                points.ncols()
            )));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(InfoOtError::NonFinite("point coordinates".into()));
        }
        let weights = Array1::from_elem(n, 1.0 / n as f64);
        Ok(Self {
            points,
            labels: None,
            weights,
        })
    }

    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(InfoOtError::DimensionMismatch(format!(
                "{} labels for {} points",
                labels.len(),
                self.len()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn with_weights(mut self, weights: Array1<f64>) -> Result<Self> {
        if weights.len() != self.len() {
            return Err(InfoOtError::DimensionMismatch(format!(
                "{} weights for {} points",
                weights.len(),
                self.len()
            )));
        }
        validate_marginal(&weights, "point weights")?;
        self.weights = weights;
        Ok(self)
    }

    pub fn points(&self) -> &Array2<f64> {
        &self.points
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn weights(&self) -> &Array1<f64> {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    /// Subset of rows, keeping labels and resetting weights to uniform.
    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        let points = self.points.select(ndarray::Axis(0), rows);
        let mut out = PointSet::new(points)?;
        if let Some(labels) = &self.labels {
            out = out.with_labels(rows.iter().map(|&r| labels[r]).collect())?;
        }
        Ok(out)
    }
}

/// Checks a marginal: nonnegative, strictly positive entries, unit mass.
pub fn validate_marginal(w: &Array1<f64>, what: &str) -> Result<()> {
    if w.is_empty() {
        return Err(InfoOtError::InvalidInput(format!("{what} is empty")));
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(InfoOtError::NonFinite(what.to_string()));
    }
    if w.iter().any(|&v| v <= 0.0) {
        return Err(InfoOtError::InvalidInput(format!(
            "{what} must be strictly positive"
        )));
    }
    let total: f64 = w.iter().sum();
    if (total - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(InfoOtError::InvalidInput(format!(
            "{what} sums to {total}, expected 1"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistanceKind {
    IntraSource,
    IntraTarget,
    Cross,
}

impl DistanceKind {
    pub fn is_intra(self) -> bool {
        !matches!(self, DistanceKind::Cross)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    values: Array2<f64>,
    kind: DistanceKind,
}

impl DistanceMatrix {
    /// Wrap a user-supplied matrix after checking it.
    pub fn from_values(values: Array2<f64>, kind: DistanceKind) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(InfoOtError::NonFinite("distance matrix".into()));
        }
        if values.iter().any(|&v| v < 0.0) {
            return Err(InfoOtError::InvalidInput(
                "distance matrix has negative entries".into(),
            ));
        }
        if kind.is_intra() {
            let (n, m) = values.dim();
            if n != m {
                return Err(InfoOtError::DimensionMismatch(format!(
                    "intra-domain distance matrix must be square, got {n}x{m}"
                )));
            }
            for i in 0..n {
                if values[[i, i]] != 0.0 {
                    return Err(InfoOtError::InvalidInput(format!(
                        "intra-domain distance matrix has nonzero diagonal at {i}"
                    )));
                }
                for j in (i + 1)..n {
                    if (values[[i, j]] - values[[j, i]]).abs() > SYMMETRY_TOL {
                        return Err(InfoOtError::InvalidInput(format!(
                            "intra-domain distance matrix not symmetric at ({i},{j})"
                        )));
                    }
                }
            }
        }
        Ok(Self { values, kind })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn kind(&self) -> DistanceKind {
        self.kind
    }

    pub fn dim(&self) -> (usize, usize) {
        self.values.dim()
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Metric<'a> {
    Euclidean,
    /// A user-supplied `|a| × |b|` matrix; the point sets only fix the shape.
    Precomputed(ArrayView2<'a, f64>),
}

pub fn euclidean(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn pairwise_distances(
    a: &PointSet,
    b: &PointSet,
    metric: Metric<'_>,
    kind: DistanceKind,
) -> Result<DistanceMatrix> {
    match metric {
        Metric::Euclidean => {
            if a.dim() != b.dim() {
                return Err(InfoOtError::DimensionMismatch(format!(
                    "euclidean distances need equal dimensions, got {} and {}",
                    a.dim(),
                    b.dim()
                )));
            }
            let (pa, pb) = (a.points(), b.points());
            let values = build_rows(a.len(), b.len(), |i, row| {
                let xi = pa.row(i);
                for (j, slot) in row.iter_mut().enumerate() {
                    *slot = euclidean(xi, pb.row(j));
                }
            });
            DistanceMatrix::from_values(values, kind)
        }
        Metric::Precomputed(values) => {
            if values.dim() != (a.len(), b.len()) {
                return Err(InfoOtError::DimensionMismatch(format!(
                    "precomputed matrix is {:?}, point sets need ({}, {})",
                    values.dim(),
                    a.len(),
                    b.len()
                )));
            }
            DistanceMatrix::from_values(values.to_owned(), kind)
        }
    }
}

/// Convenience: euclidean distances within one point set.
pub fn intra_distances(a: &PointSet, kind: DistanceKind) -> Result<DistanceMatrix> {
    pairwise_distances(a, a, Metric::Euclidean, kind)
}

/// Median of the strictly positive upper-triangular entries.
pub fn estimate_scale(d: &DistanceMatrix) -> Result<f64> {
    let v = d.values();
    let n = v.nrows();
    let mut positive: Vec<f64> = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in (i + 1)..v.ncols() {
            if v[[i, j]] > 0.0 {
                positive.push(v[[i, j]]);
            }
        }
    }
    if positive.is_empty() {
        return Err(InfoOtError::Degenerate(
            "all pairwise distances are zero".into(),
        ));
    }
    positive.sort_by(f64::total_cmp);
    let k = positive.len();
    Ok(if k % 2 == 1 {
        positive[k / 2]
    } else {
        0.5 * (positive[k / 2 - 1] + positive[k / 2])
    })
}

/// Unnormalized Gaussian kernel value.
#[inline]
pub fn gaussian_kernel(d: f64, h: f64, sigma: f64) -> f64 {
    let s = h * sigma;
    (-(d * d) / (2.0 * s * s)).exp()
}

fn check_bandwidth(h: f64, sigma: f64) -> Result<()> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(InfoOtError::InvalidInput(format!(
            "bandwidth must be positive, got {h}"
        )));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(InfoOtError::InvalidInput(format!(
            "kernel scale must be positive, got {sigma}"
        )));
    }
    Ok(())
}

/// Gaussian Gram matrix. Entries lie in `[0, 1]`; they are positive in exact
/// arithmetic but can underflow to zero for distances far beyond `h·σ`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelGram {
    values: Array2<f64>,
    bandwidth: f64,
    scale: f64,
}

impl KernelGram {
    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Row sums, each accumulated in column order.
    pub fn row_sums(&self) -> Array1<f64> {
        self.values
            .rows()
            .into_iter()
            .map(|r| r.iter().sum::<f64>())
            .collect()
    }
}

pub fn gaussian_gram(d: &DistanceMatrix, h: f64, sigma: f64) -> Result<KernelGram> {
    check_bandwidth(h, sigma)?;
    let dv = d.values();
    let (n, m) = dv.dim();
    let values = build_rows(n, m, |i, row| {
        for (j, slot) in row.iter_mut().enumerate() {
            *slot = gaussian_kernel(dv[[i, j]], h, sigma);
        }
    });
    Ok(KernelGram {
        values,
        bandwidth: h,
        scale: sigma,
    })
}

/// Everything the kernelized density ratios need for one source/target pair.
#[derive(Debug, Clone)]
pub struct KdeModel {
    dist_x: DistanceMatrix,
    dist_y: DistanceMatrix,
    gram_x: KernelGram,
    gram_y: KernelGram,
    marginal_x: Array1<f64>,
    marginal_y: Array1<f64>,
    source_points: Option<Array2<f64>>,
}

/// Per-domain scales from the median heuristic, then Gram matrices at `h`.
pub fn build_kde_model(dx: &DistanceMatrix, dy: &DistanceMatrix, h: f64) -> Result<KdeModel> {
    let sx = scale_or_unit(dx)?;
    let sy = scale_or_unit(dy)?;
    build_kde_model_with_scales(dx, dy, h, sx, sy)
}

/// A single point has no pairwise distances; its kernel is the lone peak and
/// any scale gives the same Gram matrix, so use 1.
fn scale_or_unit(d: &DistanceMatrix) -> Result<f64> {
    if d.dim().0 == 1 {
        Ok(1.0)
    } else {
        estimate_scale(d)
    }
}

pub fn build_kde_model_with_scales(
    dx: &DistanceMatrix,
    dy: &DistanceMatrix,
    h: f64,
    sigma_x: f64,
    sigma_y: f64,
) -> Result<KdeModel> {
    for (d, name) in [(dx, "source"), (dy, "target")] {
        let (r, c) = d.dim();
        if !d.kind().is_intra() || r != c {
            return Err(InfoOtError::InvalidInput(format!(
                "{name} distances must be a square intra-domain matrix"
            )));
        }
    }
    let gram_x = gaussian_gram(dx, h, sigma_x)?;
    let gram_y = gaussian_gram(dy, h, sigma_y)?;
    let marginal_x = gram_x.row_sums();
    let marginal_y = gram_y.row_sums();
    Ok(KdeModel {
        dist_x: dx.clone(),
        dist_y: dy.clone(),
        gram_x,
        gram_y,
        marginal_x,
        marginal_y,
        source_points: None,
    })
}

impl KdeModel {
    /// Euclidean model straight from coordinates; keeps the source points so
    /// out-of-sample queries can be embedded later.
    pub fn from_points(source: &PointSet, target: &PointSet, h: f64) -> Result<Self> {
        let dx = intra_distances(source, DistanceKind::IntraSource)?;
        let dy = intra_distances(target, DistanceKind::IntraTarget)?;
        Ok(build_kde_model(&dx, &dy, h)?.with_source_points(source.points().clone()))
    }

    /// Attach source coordinates (euclidean metric) for out-of-sample queries.
    pub fn with_source_points(mut self, points: Array2<f64>) -> Self {
        self.source_points = Some(points);
        self
    }

    /// Same distances and scales, different bandwidth.
    pub fn with_bandwidth(&self, h: f64) -> Result<Self> {
        let mut out = build_kde_model_with_scales(
            &self.dist_x,
            &self.dist_y,
            h,
            self.gram_x.scale(),
            self.gram_y.scale(),
        )?;
        out.source_points = self.source_points.clone();
        Ok(out)
    }

    pub fn n(&self) -> usize {
        self.marginal_x.len()
    }

    pub fn m(&self) -> usize {
        self.marginal_y.len()
    }

    pub fn bandwidth(&self) -> f64 {
        self.gram_x.bandwidth()
    }

    pub fn scale_x(&self) -> f64 {
        self.gram_x.scale()
    }

    pub fn scale_y(&self) -> f64 {
        self.gram_y.scale()
    }

    pub fn gram_x(&self) -> &KernelGram {
        &self.gram_x
    }

    pub fn gram_y(&self) -> &KernelGram {
        &self.gram_y
    }

    pub fn marginal_x(&self) -> &Array1<f64> {
        &self.marginal_x
    }

    pub fn marginal_y(&self) -> &Array1<f64> {
        &self.marginal_y
    }

    pub fn dist_x(&self) -> &DistanceMatrix {
        &self.dist_x
    }

    pub fn dist_y(&self) -> &DistanceMatrix {
        &self.dist_y
    }

    pub fn source_points(&self) -> Option<&Array2<f64>> {
        self.source_points.as_ref()
    }

    pub(crate) fn check_plan_shape(&self, plan: &ArrayView2<f64>) -> Result<()> {
        if plan.dim() != (self.n(), self.m()) {
            return Err(InfoOtError::DimensionMismatch(format!(
                "plan is {:?}, model expects ({}, {})",
                plan.dim(),
                self.n(),
                self.m()
            )));
        }
        Ok(())
    }
}

/// Kernelized joint density at every sample pair: `K_X Γ K_Yᵀ`.
pub fn joint_density(model: &KdeModel, plan: ArrayView2<f64>) -> Result<Array2<f64>> {
    model.check_plan_shape(&plan)?;
    let left = model.gram_x.values().dot(&plan);
    Ok(left.dot(&model.gram_y.values().t()))
}
