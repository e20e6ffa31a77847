//! Experiment pipelines: alignment, domain adaptation, retrieval and
//! circular-validation bandwidth selection, plus the metrics they report.

use std::collections::BTreeMap;
use std::time::Instant;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assignment::exact_assignment;
use crate::error::{InfoOtError, Result};
use crate::io;
use crate::kernels::{
    build_kde_model_with_scales, estimate_scale, euclidean, intra_distances, pairwise_distances,
    DistanceKind, DistanceMatrix, KdeModel, Metric, PointSet,
};
use crate::projection::{
    barycentric_project, conditional_project, importance_weights, top_k, ProjectionMode,
    ProjectionRequest, Queries, ScoreMatrix,
};
use crate::solver::{solve_fused_infoot_with_model, AlignmentResult, SolverConfig};
use crate::spec::{ExperimentSpec, Method, Scenario};
use crate::synthetic::generate;

/// Source and target samples for one experiment.
#[derive(Debug, Clone)]
pub struct Domains {
    pub source: PointSet,
    pub target: PointSet,
    /// Target rows that are injected outliers.
    pub outliers: Vec<usize>,
    pub queries: Option<PointSet>,
    pub source_distances: Option<DistanceMatrix>,
    pub target_distances: Option<DistanceMatrix>,
}

impl Domains {
    pub fn new(source: PointSet, target: PointSet) -> Self {
        Self {
            source,
            target,
            outliers: Vec::new(),
            queries: None,
            source_distances: None,
            target_distances: None,
        }
    }
}

/// Generated from `spec.generator`, or read from `spec.data` when present.
pub fn load_domains(spec: &ExperimentSpec) -> Result<Domains> {
    let Some(data) = &spec.data else {
        let pair = generate(&spec.generator)?;
        return Ok(Domains {
            source: pair.source,
            target: pair.target,
            outliers: pair.outliers,
            queries: pair.queries,
            source_distances: None,
            target_distances: None,
        });
    };
    let mut domains = Domains::new(
        io::read_points_file(&data.source)?,
        io::read_points_file(&data.target)?,
    );
    if let Some(path) = &data.source_distances {
        domains.source_distances = Some(io::read_distances_file(path, DistanceKind::IntraSource)?);
    }
    if let Some(path) = &data.target_distances {
        domains.target_distances = Some(io::read_distances_file(path, DistanceKind::IntraTarget)?);
    }
    if let Some(path) = &data.queries {
        domains.queries = Some(io::read_points_file(path)?);
    }
    Ok(domains)
}

fn require_labels<'a>(set: &'a PointSet, what: &str) -> Result<&'a [usize]> {
    set.labels()
        .ok_or_else(|| InfoOtError::InvalidInput(format!("{what} points need labels")))
}

/// Euclidean source distances plus `penalty` between differently labelled
/// points.
pub fn class_conditional_cost(points: &PointSet, penalty: f64) -> Result<DistanceMatrix> {
    let labels = require_labels(points, "class-conditional")?;
    if !(penalty >= 0.0 && penalty.is_finite()) {
        return Err(InfoOtError::InvalidInput(format!(
            "penalty must be nonnegative, got {penalty}"
        )));
    }
    let mut values = intra_distances(points, DistanceKind::IntraSource)?.into_values();
    for ((i, j), v) in values.indexed_iter_mut() {
        if labels[i] != labels[j] {
            *v += penalty;
        }
    }
    DistanceMatrix::from_values(values, DistanceKind::IntraSource)
}

/// Label of the nearest training row for every query; ties go to the
/// lowest training index.
pub fn nearest_neighbor(
    train: ArrayView2<f64>,
    labels: &[usize],
    queries: ArrayView2<f64>,
) -> Result<Vec<usize>> {
    if train.nrows() == 0 || train.nrows() != labels.len() {
        return Err(InfoOtError::InvalidInput(
            "1-NN needs at least one labelled training row".into(),
        ));
    }
    if train.ncols() != queries.ncols() {
        return Err(InfoOtError::DimensionMismatch(format!(
            "1-NN training rows have {} features, queries have {}",
            train.ncols(),
            queries.ncols()
        )));
    }
    Ok(queries
        .rows()
        .into_iter()
        .map(|q| {
            let mut best = (f64::INFINITY, 0);
            for (k, t) in train.rows().into_iter().enumerate() {
                let d = euclidean(q, t);
                if d < best.0 {
                    best = (d, k);
                }
            }
            labels[best.1]
        })
        .collect())
}

pub fn accuracy(predicted: &[usize], truth: &[usize]) -> f64 {
    let hits = predicted.iter().zip(truth).filter(|(a, b)| a == b).count();
    hits as f64 / truth.len().max(1) as f64
}

fn compact(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut ids = labels.to_vec();
    ids.sort_unstable();
    ids.dedup();
    let mapped = labels
        .iter()
        .map(|l| ids.binary_search(l).expect("label is present"))
        .collect();
    (mapped, ids.len())
}

/// Largest plan mass that a one-to-one pairing of source clusters with
/// target clusters keeps inside paired clusters, as a fraction of the total.
pub fn cluster_coherence(
    plan: ArrayView2<f64>,
    source_labels: &[usize],
    target_labels: &[usize],
) -> Result<f64> {
    if plan.dim() != (source_labels.len(), target_labels.len()) {
        return Err(InfoOtError::DimensionMismatch(
            "labels do not match plan shape".into(),
        ));
    }
    let (src, ks) = compact(source_labels);
    let (tgt, kt) = compact(target_labels);
    let k = ks.max(kt);
    let mut mass = Array2::<f64>::zeros((k, k));
    for ((i, j), &g) in plan.indexed_iter() {
        mass[[src[i], tgt[j]]] += g;
    }
    let (perm, _) = exact_assignment(mass.mapv(|v| -v).view())?;
    let kept: f64 = perm.iter().enumerate().map(|(c, &d)| mass[[c, d]]).sum();
    Ok((kept / plan.sum()).min(1.0))
}

/// Fraction of queries whose top `k` targets share their label, averaged.
pub fn precision_at_k(
    scores: &ScoreMatrix,
    query_labels: &[usize],
    target_labels: &[usize],
    k: usize,
) -> Result<f64> {
    let records = top_k(scores, k)?;
    if records.len() != query_labels.len() {
        return Err(InfoOtError::DimensionMismatch(
            "one label per query is needed".into(),
        ));
    }
    let total: f64 = records
        .iter()
        .map(|r| {
            let hits = r
                .target_ids
                .iter()
                .filter(|&&j| target_labels[j] == query_labels[r.query_id])
                .count();
            hits as f64 / k as f64
        })
        .sum();
    Ok(total / records.len() as f64)
}

/// Projections lying within `radius` of any outlier.
pub fn outlier_hits(
    projection: ArrayView2<f64>,
    target: &PointSet,
    outliers: &[usize],
    radius: f64,
) -> usize {
    projection
        .rows()
        .into_iter()
        .filter(|p| {
            outliers
                .iter()
                .any(|&o| euclidean(*p, target.points().row(o)) < radius)
        })
        .count()
}

/// Fraction of source points whose projection is nearest (euclidean) to the
/// centroid of the target cluster carrying the same label. Outliers are
/// left out of the centroids.
pub fn centroid_proximity(
    projection: ArrayView2<f64>,
    source_labels: &[usize],
    target: &PointSet,
    outliers: &[usize],
) -> Result<f64> {
    let labels = require_labels(target, "target")?;
    let mut ids: Vec<usize> = labels.to_vec();
    ids.sort_unstable();
    ids.dedup();
    let centroids: Vec<(usize, ndarray::Array1<f64>)> = ids
        .iter()
        .map(|&c| {
            let rows: Vec<usize> = (0..target.len())
                .filter(|j| labels[*j] == c && !outliers.contains(j))
                .collect();
            let sub = target.points().select(Axis(0), &rows);
            (
                c,
                sub.mean_axis(Axis(0))
                    .unwrap_or_else(|| target.points().row(0).to_owned()),
            )
        })
        .collect();
    let hits = projection
        .rows()
        .into_iter()
        .zip(source_labels)
        .filter(|(p, &label)| {
            let mut best = (f64::INFINITY, usize::MAX);
            for (c, centroid) in &centroids {
                let d = euclidean(*p, centroid.view());
                if d < best.0 {
                    best = (d, *c);
                }
            }
            best.1 == label
        })
        .count();
    Ok(hits as f64 / source_labels.len().max(1) as f64)
}

/// Deterministic holdout of `round(fraction · m)` target rows, at least one
/// when `fraction > 0` and never all of them. Returns `(train, test)`, both
/// sorted. With `fraction = 0` every row is in both.
pub fn holdout_split(m: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    if fraction <= 0.0 || m < 2 {
        let all: Vec<usize> = (0..m).collect();
        return (all.clone(), all);
    }
    let count = ((fraction * m as f64).round() as usize).clamp(1, m - 1);
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut test = order[..count].to_vec();
    let mut train = order[count..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    (train, test)
}

/// Solver diagnostics for the report; timing lives at the report level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub n: usize,
    pub m: usize,
    pub iterations: usize,
    pub converged: bool,
    pub inner_failures: usize,
    pub marginal_violation: f64,
    pub cost_scale: f64,
    pub final_objective: f64,
    pub final_mutual_information: f64,
}

impl SolveDiagnostics {
    pub fn from_result(r: &AlignmentResult) -> Self {
        let (n, m) = r.coupling.dim();
        Self {
            n,
            m,
            iterations: r.iterations(),
            converged: r.converged,
            inner_failures: r.inner_failures,
            marginal_violation: r.coupling.marginal_violation(),
            cost_scale: r.cost_scale,
            final_objective: r.objective_trace.last().copied().unwrap_or(0.0),
            final_mutual_information: r.mi_trace.last().copied().unwrap_or(0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandwidthScore {
    pub bandwidth: f64,
    pub score: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cluster_coherence: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy_barycentric: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy_conditional: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub precision_at_k: Option<BTreeMap<usize, f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outlier_hits: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outlier_hits_barycentric: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outlier_hits_conditional: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub centroid_proximity_barycentric: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub centroid_proximity_conditional: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chosen_bandwidth: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bandwidth_scores: Option<Vec<BandwidthScore>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scenario: Scenario,
    pub version: String,
    /// Fully resolved spec, overrides applied.
    pub spec: ExperimentSpec,
    pub metrics: Metrics,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub solves: Vec<SolveDiagnostics>,
    /// Every outer and inner solve converged.
    pub converged: bool,
    pub wall_time_secs: f64,
}

impl EvalReport {
    pub fn new(spec: &ExperimentSpec) -> Self {
        Self {
            scenario: spec.scenario,
            version: concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION")).to_string(),
            spec: spec.clone(),
            metrics: Metrics::default(),
            solves: Vec::new(),
            converged: true,
            wall_time_secs: 0.0,
        }
    }

    fn record(&mut self, result: &AlignmentResult) {
        self.converged &= result.fully_converged();
        self.solves.push(SolveDiagnostics::from_result(result));
    }
}

/// Scales from the euclidean geometry of each side; the class penalty would
/// otherwise dominate the source median.
fn euclidean_scale(set: &PointSet) -> Result<f64> {
    if set.len() == 1 {
        return Ok(1.0);
    }
    estimate_scale(&intra_distances(set, DistanceKind::IntraSource)?)
}

fn scale_of(d: &DistanceMatrix) -> Result<f64> {
    if d.dim().0 == 1 {
        Ok(1.0)
    } else {
        estimate_scale(d)
    }
}

/// Run the configured method on a prebuilt model.
pub fn fit(
    method: Method,
    cfg: &SolverConfig,
    model: &KdeModel,
    cross: ArrayView2<f64>,
    source: &PointSet,
    target: &PointSet,
) -> Result<AlignmentResult> {
    let (p, q) = (source.weights(), target.weights());
    match method {
        Method::Fused => solve_fused_infoot_with_model(cross, model, p, q, cfg),
        Method::Infoot => crate::solver::solve_infoot_with_model(model, p, q, cfg),
        Method::Sinkhorn => {
            let plain = SolverConfig {
                lambda: 0.0,
                outer_iters: 1,
                ..*cfg
            };
            solve_fused_infoot_with_model(cross, model, p, q, &plain)
        }
    }
}

fn cross_cost(source: &PointSet, target: &PointSet) -> Result<Array2<f64>> {
    Ok(pairwise_distances(source, target, Metric::Euclidean, DistanceKind::Cross)?.into_values())
}

/// Model with euclidean (or supplied) intra distances on both sides.
pub fn euclidean_model(domains: &Domains, h: f64) -> Result<KdeModel> {
    let dx = match &domains.source_distances {
        Some(d) => d.clone(),
        None => intra_distances(&domains.source, DistanceKind::IntraSource)?,
    };
    let dy = match &domains.target_distances {
        Some(d) => d.clone(),
        None => intra_distances(&domains.target, DistanceKind::IntraTarget)?,
    };
    let model = build_kde_model_with_scales(&dx, &dy, h, scale_of(&dx)?, scale_of(&dy)?)?;
    Ok(if domains.source_distances.is_none() {
        model.with_source_points(domains.source.points().clone())
    } else {
        model
    })
}

/// Model whose source distances carry the class-mismatch penalty. Kernel
/// scales still come from the plain euclidean distances.
pub fn class_conditional_model(
    source: &PointSet,
    target: &PointSet,
    penalty: f64,
    h: f64,
) -> Result<KdeModel> {
    let dx = class_conditional_cost(source, penalty)?;
    let dy = intra_distances(target, DistanceKind::IntraTarget)?;
    build_kde_model_with_scales(&dx, &dy, h, euclidean_scale(source)?, scale_of(&dy)?)
}

fn project_in_sample(
    mode: ProjectionMode,
    bandwidth: Option<f64>,
    model: &KdeModel,
    plan: ArrayView2<f64>,
    target: &PointSet,
) -> Result<Array2<f64>> {
    match mode {
        ProjectionMode::Barycentric => barycentric_project(plan, target),
        ProjectionMode::Conditional => {
            conditional_project(model, plan, &Queries::all(model.n()), target, bandwidth)
        }
    }
}

/// Output of [`alignment_pipeline`].
#[derive(Debug, Clone)]
pub struct AlignmentRun {
    pub domains: Domains,
    pub result: AlignmentResult,
    /// In-sample projection with the requested mode, if projecting.
    pub projection: Option<Array2<f64>>,
    /// Out-of-sample projection of `domains.queries`, conditional mode only.
    pub query_projection: Option<Array2<f64>>,
    pub report: EvalReport,
}

/// Solve on the scenario's domains and, when `project` is set, map the
/// source into the target with both projection modes.
pub fn alignment_pipeline(spec: &ExperimentSpec, project: bool) -> Result<AlignmentRun> {
    spec.validate()?;
    let start = Instant::now();
    let domains = load_domains(spec)?;
    let mut report = EvalReport::new(spec);
    let model = euclidean_model(&domains, spec.solver.bandwidth)?;
    let cross = match spec.method {
        Method::Infoot => Array2::zeros((domains.source.len(), domains.target.len())),
        _ => cross_cost(&domains.source, &domains.target)?,
    };
    let result = fit(
        spec.method,
        &spec.solver,
        &model,
        cross.view(),
        &domains.source,
        &domains.target,
    )?;
    report.record(&result);
    let plan = result.coupling.view();

    if let (Some(sl), Some(tl)) = (domains.source.labels(), domains.target.labels()) {
        report.metrics.cluster_coherence = Some(cluster_coherence(plan, sl, tl)?);
    }

    let mut projection = None;
    let mut query_projection = None;
    if project {
        let h_proj = spec.projection.bandwidth;
        let bary = barycentric_project(plan, &domains.target)?;
        let cond = conditional_project(
            &model,
            plan,
            &Queries::all(model.n()),
            &domains.target,
            h_proj,
        )?;
        let m = &mut report.metrics;
        if !domains.outliers.is_empty() {
            let radius = spec.generator.spread / 2.0;
            let hb = outlier_hits(bary.view(), &domains.target, &domains.outliers, radius);
            let hc = outlier_hits(cond.view(), &domains.target, &domains.outliers, radius);
            m.outlier_hits_barycentric = Some(hb);
            m.outlier_hits_conditional = Some(hc);
            m.outlier_hits = Some(match spec.projection.mode {
                ProjectionMode::Barycentric => hb,
                ProjectionMode::Conditional => hc,
            });
        }
        if let (Some(sl), Some(_)) = (domains.source.labels(), domains.target.labels()) {
            m.centroid_proximity_barycentric = Some(centroid_proximity(
                bary.view(),
                sl,
                &domains.target,
                &domains.outliers,
            )?);
            m.centroid_proximity_conditional = Some(centroid_proximity(
                cond.view(),
                sl,
                &domains.target,
                &domains.outliers,
            )?);
        }
        if let Some(queries) = &domains.queries {
            if model.source_points().is_some() {
                query_projection = Some(conditional_project(
                    &model,
                    plan,
                    &Queries::Points(queries.points().clone()),
                    &domains.target,
                    h_proj,
                )?);
            }
        }
        projection = Some(match spec.projection.mode {
            ProjectionMode::Barycentric => bary,
            ProjectionMode::Conditional => cond,
        });
    }

    report.wall_time_secs = start.elapsed().as_secs_f64();
    Ok(AlignmentRun {
        domains,
        result,
        projection,
        query_projection,
        report,
    })
}

/// Output of [`adaptation_pipeline`].
#[derive(Debug, Clone)]
pub struct AdaptationRun {
    pub result: AlignmentResult,
    /// Source projected with the requested mode.
    pub projection: Array2<f64>,
    /// Target rows used for fitting and for scoring.
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub report: EvalReport,
}

/// Fit F-InfoOT from labelled source to the target training split, project
/// the source, train 1-NN on the projection and score the held-out target.
/// Both projection modes are scored on the same coupling.
pub fn adaptation_on(domains: &Domains, spec: &ExperimentSpec) -> Result<AdaptationRun> {
    spec.validate()?;
    let start = Instant::now();
    let source_labels = require_labels(&domains.source, "source")?;
    let target_labels = require_labels(&domains.target, "target")?;
    let (train, test) = holdout_split(
        domains.target.len(),
        spec.holdout_fraction,
        spec.generator.seed,
    );
    let target_train = domains.target.select(&train)?;
    let target_test = domains.target.points().select(Axis(0), &test);
    let truth: Vec<usize> = test.iter().map(|&j| target_labels[j]).collect();

    let model = class_conditional_model(
        &domains.source,
        &target_train,
        spec.class_penalty,
        spec.solver.bandwidth,
    )?;
    let cross = cross_cost(&domains.source, &target_train)?;
    let result = solve_fused_infoot_with_model(
        cross.view(),
        &model,
        domains.source.weights(),
        target_train.weights(),
        &spec.solver,
    )?;
    let plan = result.coupling.view();

    let score = |proj: &Array2<f64>| -> Result<f64> {
        let predicted = nearest_neighbor(proj.view(), source_labels, target_test.view())?;
        Ok(accuracy(&predicted, &truth))
    };
    let bary = barycentric_project(plan, &target_train)?;
    let cond = conditional_project(
        &model,
        plan,
        &Queries::all(model.n()),
        &target_train,
        spec.projection.bandwidth,
    )?;
    let (acc_b, acc_c) = (score(&bary)?, score(&cond)?);

    let mut report = EvalReport::new(spec);
    report.record(&result);
    report.metrics.accuracy_barycentric = Some(acc_b);
    report.metrics.accuracy_conditional = Some(acc_c);
    let projection = match spec.projection.mode {
        ProjectionMode::Barycentric => {
            report.metrics.accuracy = Some(acc_b);
            bary
        }
        ProjectionMode::Conditional => {
            report.metrics.accuracy = Some(acc_c);
            cond
        }
    };
    report.wall_time_secs = start.elapsed().as_secs_f64();
    Ok(AdaptationRun {
        result,
        projection,
        train,
        test,
        report,
    })
}

pub fn adaptation_pipeline(spec: &ExperimentSpec) -> Result<AdaptationRun> {
    adaptation_on(&load_domains(spec)?, spec)
}

/// Output of [`retrieval_pipeline`].
#[derive(Debug, Clone)]
pub struct RetrievalRun {
    pub result: AlignmentResult,
    /// Normalized importance weights, one row per query.
    pub scores: ScoreMatrix,
    pub report: EvalReport,
}

/// Fit F-InfoOT on the training domains, then rank targets for the
/// held-out queries by importance weight.
pub fn retrieval_on(domains: &Domains, spec: &ExperimentSpec) -> Result<RetrievalRun> {
    spec.validate()?;
    let start = Instant::now();
    let queries = domains
        .queries
        .as_ref()
        .ok_or_else(|| InfoOtError::InvalidInput("retrieval needs held-out queries".into()))?;
    let query_labels = require_labels(queries, "query")?;
    let target_labels = require_labels(&domains.target, "target")?;
    let m = domains.target.len();
    if let Some(&k) = spec.precision_k.iter().find(|&&k| k > m) {
        return Err(InfoOtError::InvalidInput(format!(
            "precision@{k} needs at least {k} targets, there are {m}"
        )));
    }

    let model = euclidean_model(domains, spec.solver.bandwidth)?;
    let cross = cross_cost(&domains.source, &domains.target)?;
    let result = fit(
        Method::Fused,
        &spec.solver,
        &model,
        cross.view(),
        &domains.source,
        &domains.target,
    )?;
    let scores = importance_weights(
        &model,
        result.coupling.view(),
        &Queries::Points(queries.points().clone()),
        spec.projection.bandwidth,
    )?
    .normalized();

    let mut precision = BTreeMap::new();
    for &k in &spec.precision_k {
        precision.insert(k, precision_at_k(&scores, query_labels, target_labels, k)?);
    }
    let mut report = EvalReport::new(spec);
    report.record(&result);
    report.metrics.precision_at_k = Some(precision);
    report.wall_time_secs = start.elapsed().as_secs_f64();
    Ok(RetrievalRun {
        result,
        scores,
        report,
    })
}

pub fn retrieval_pipeline(spec: &ExperimentSpec) -> Result<RetrievalRun> {
    retrieval_on(&load_domains(spec)?, spec)
}

/// Source-side distances for a solve; the class penalty is only applied in
/// the adaptation scenario.
fn scenario_model(
    spec: &ExperimentSpec,
    source: &PointSet,
    target: &PointSet,
    h: f64,
) -> Result<KdeModel> {
    if spec.scenario == Scenario::Adaptation {
        class_conditional_model(source, target, spec.class_penalty, h)
    } else {
        euclidean_model(&Domains::new(source.clone(), target.clone()), h)
    }
}

/// One forward/reverse round at bandwidth `h`: agreement between the true
/// source labels and labels sent to the target and back.
fn circular_score(
    source: &PointSet,
    target: &PointSet,
    spec: &ExperimentSpec,
    h: f64,
) -> Result<(f64, bool)> {
    let cfg = SolverConfig {
        bandwidth: h,
        ..spec.solver
    };
    let mode = spec.projection.mode;
    let h_proj = spec.projection.bandwidth;
    let source_labels = require_labels(source, "source")?;

    let forward_model = scenario_model(spec, source, target, h)?;
    let cross = cross_cost(source, target)?;
    let forward = solve_fused_infoot_with_model(
        cross.view(),
        &forward_model,
        source.weights(),
        target.weights(),
        &cfg,
    )?;
    let projected = project_in_sample(
        mode,
        h_proj,
        &forward_model,
        forward.coupling.view(),
        target,
    )?;
    let pseudo = nearest_neighbor(projected.view(), source_labels, target.points().view())?;

    let relabelled = PointSet::new(target.points().clone())?
        .with_weights(target.weights().clone())?
        .with_labels(pseudo.clone())?;
    let unlabelled =
        PointSet::new(source.points().clone())?.with_weights(source.weights().clone())?;
    let reverse_model = scenario_model(spec, &relabelled, &unlabelled, h)?;
    let reverse = solve_fused_infoot_with_model(
        cross.t(),
        &reverse_model,
        target.weights(),
        source.weights(),
        &cfg,
    )?;
    let back = project_in_sample(
        mode,
        h_proj,
        &reverse_model,
        reverse.coupling.view(),
        &unlabelled,
    )?;
    let recovered = nearest_neighbor(back.view(), &pseudo, source.points().view())?;
    Ok((
        accuracy(&recovered, source_labels),
        forward.fully_converged() && reverse.fully_converged(),
    ))
}

/// Pick the grid bandwidth with the best circular agreement; ties go to the
/// smaller bandwidth. Only the target training split is used.
pub fn circular_validation_on(
    domains: &Domains,
    spec: &ExperimentSpec,
    grid: &[f64],
) -> Result<(f64, Vec<BandwidthScore>)> {
    if grid.is_empty() {
        return Err(InfoOtError::InvalidInput("bandwidth grid is empty".into()));
    }
    if let Some(h) = grid.iter().find(|h| !(**h > 0.0 && h.is_finite())) {
        return Err(InfoOtError::InvalidInput(format!(
            "bandwidth grid entries must be positive, got {h}"
        )));
    }
    let (train, _) = holdout_split(
        domains.target.len(),
        spec.holdout_fraction,
        spec.generator.seed,
    );
    let target = domains.target.select(&train)?;
    let target = PointSet::new(target.points().clone())?;

    let scores = grid
        .par_iter()
        .map(|&h| {
            circular_score(&domains.source, &target, spec, h).map(|(score, converged)| {
                BandwidthScore {
                    bandwidth: h,
                    score,
                    converged,
                }
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let best = scores
        .iter()
        .max_by(|a, b| {
            a.score
                .total_cmp(&b.score)
                .then(b.bandwidth.total_cmp(&a.bandwidth))
        })
        .expect("grid is nonempty");
    Ok((best.bandwidth, scores))
}

/// Circular validation over `spec.validation_grid`, as a report.
pub fn circular_validation(spec: &ExperimentSpec) -> Result<EvalReport> {
    spec.validate()?;
    let start = Instant::now();
    let domains = load_domains(spec)?;
    let (chosen, scores) = circular_validation_on(&domains, spec, &spec.validation_grid)?;
    let mut report = EvalReport::new(spec);
    report.converged = scores.iter().all(|s| s.converged);
    report.metrics.chosen_bandwidth = Some(chosen);
    report.metrics.bandwidth_scores = Some(scores);
    report.wall_time_secs = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Projection mode dispatch shared with the CLI.
pub fn project_with(
    request: &ProjectionRequest,
    model: &KdeModel,
    plan: ArrayView2<f64>,
    target: &PointSet,
) -> Result<Array2<f64>> {
    project_in_sample(request.mode, request.bandwidth, model, plan, target)
}
