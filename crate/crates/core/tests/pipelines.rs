mod common;

use std::path::{Path, PathBuf};

use infoot::kernels::PointSet;
use infoot::pipelines::{
    adaptation_on, adaptation_pipeline, circular_validation, circular_validation_on,
    euclidean_model, load_domains, precision_at_k, retrieval_on, retrieval_pipeline, Domains,
};
use infoot::projection::{importance_weights, ProjectionMode, Queries, ScoreMatrix};
use infoot::spec::{ExperimentSpec, Scenario};
use infoot::synthetic::{cluster_means, GeneratorSpec};
use ndarray::Array2;
use proptest::prelude::*;
use serde_json::{json, Value};

fn spec_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("specs")
        .join(name)
}

fn shipped(name: &str) -> ExperimentSpec {
    ExperimentSpec::load(&spec_path(name)).unwrap()
}

fn close(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => {
            let (x, y) = (x.as_f64().unwrap(), y.as_f64().unwrap());
            (x - y).abs() <= 1e-9 * x.abs().max(y.abs()).max(1.0)
        }
        (Value::Array(x), Value::Array(y)) => {
            x.len() == y.len() && x.iter().zip(y).all(|(a, b)| close(a, b))
        }
        (Value::Object(x), Value::Object(y)) => {
            x.len() == y.len() && x.iter().all(|(k, v)| y.get(k).is_some_and(|w| close(v, w)))
        }
        _ => a == b,
    }
}

/// Compare against `tests/golden/<name>.json`; `INFOOT_BLESS=1` rewrites it.
fn golden(name: &str, value: Value) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(format!("{name}.json"));
    if std::env::var_os("INFOOT_BLESS").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, serde_json::to_string_pretty(&value).unwrap() + "\n").unwrap();
        return;
    }
    let text = std::fs::read_to_string(&path)
        .unwrap_or_else(|_| panic!("missing {}; run with INFOOT_BLESS=1", path.display()));
    let expected: Value = serde_json::from_str(&text).unwrap();
    assert!(
        close(&value, &expected),
        "{name}: got {value:#}, expected {expected:#}"
    );
}

fn two_clusters(seed: u64) -> PointSet {
    infoot::synthetic::generate(&GeneratorSpec {
        source_sizes: vec![15, 15],
        ..GeneratorSpec::new(seed)
    })
    .unwrap()
    .source
}

#[test]
fn identity_shift_adapts_perfectly_in_both_modes() {
    let x = two_clusters(4);
    let domains = Domains::new(x.clone(), x);
    for mode in [ProjectionMode::Barycentric, ProjectionMode::Conditional] {
        let mut spec = ExperimentSpec::new(Scenario::Adaptation, GeneratorSpec::new(4));
        spec.projection.mode = mode;
        let run = adaptation_on(&domains, &spec).unwrap();
        assert_eq!(run.report.metrics.accuracy, Some(1.0), "{mode:?}");
    }
}

#[test]
fn single_grid_entry_is_chosen() {
    let spec = ExperimentSpec::new(
        Scenario::PointCloud,
        GeneratorSpec {
            source_sizes: vec![10, 10],
            ..GeneratorSpec::new(1)
        },
    );
    let domains = load_domains(&spec).unwrap();
    let (h, scores) = circular_validation_on(&domains, &spec, &[0.45]).unwrap();
    assert_eq!(h, 0.45);
    assert_eq!(scores.len(), 1);
    assert!(circular_validation_on(&domains, &spec, &[0.3, 0.0]).is_err());
    assert!(circular_validation_on(&domains, &spec, &[]).is_err());
}

#[test]
fn identity_shift_ties_at_one_and_picks_smallest() {
    let x = two_clusters(8);
    let domains = Domains::new(x.clone(), x);
    let spec = ExperimentSpec::new(Scenario::PointCloud, GeneratorSpec::new(8));
    let grid = [0.6, 0.2, 0.4];
    let (h, scores) = circular_validation_on(&domains, &spec, &grid).unwrap();
    assert!(scores.iter().all(|s| s.score == 1.0), "{scores:?}");
    assert_eq!(scores.iter().map(|s| s.bandwidth).collect::<Vec<_>>(), grid);
    assert_eq!(h, 0.2);
}

fn retrieval_spec(sizes: Vec<usize>) -> ExperimentSpec {
    ExperimentSpec::new(
        Scenario::Retrieval,
        GeneratorSpec {
            source_sizes: sizes,
            queries_per_cluster: 4,
            rotation: 0.4,
            ..GeneratorSpec::new(12)
        },
    )
}

#[test]
fn single_class_has_perfect_precision() {
    let spec = retrieval_spec(vec![30]);
    let run = retrieval_pipeline(&spec).unwrap();
    let p = run.report.metrics.precision_at_k.unwrap();
    assert!(p.values().all(|&v| v == 1.0), "{p:?}");
}

#[test]
fn duplicated_queries_score_like_training_rows() {
    let spec = retrieval_spec(vec![12, 12]);
    let mut domains = load_domains(&spec).unwrap();
    domains.queries = Some(domains.source.clone());
    let run = retrieval_on(&domains, &spec).unwrap();
    let model = euclidean_model(&domains, spec.solver.bandwidth).unwrap();
    let in_sample = importance_weights(&model, run.result.coupling.view(), &Queries::all(24), None)
        .unwrap()
        .normalized();
    let labels = domains.source.labels().unwrap();
    let targets = domains.target.labels().unwrap();
    for k in [1, 5, 15] {
        let expected = precision_at_k(&in_sample, labels, targets, k).unwrap();
        assert_eq!(
            run.report.metrics.precision_at_k.as_ref().unwrap()[&k],
            expected
        );
    }
}

#[test]
fn precision_rejects_k_above_target_count() {
    let mut spec = retrieval_spec(vec![3, 3]);
    spec.precision_k = vec![1, 7];
    assert!(retrieval_pipeline(&spec).is_err());
}

#[test]
fn source_labels_do_not_reach_the_retrieval_solver() {
    let spec = retrieval_spec(vec![10, 10]);
    let domains = load_domains(&spec).unwrap();
    let mut relabelled = domains.clone();
    relabelled.source = PointSet::new(domains.source.points().clone())
        .unwrap()
        .with_labels(vec![0; 20])
        .unwrap();
    let a = retrieval_on(&domains, &spec).unwrap();
    let b = retrieval_on(&relabelled, &spec).unwrap();
    assert_eq!(a.result.coupling.values(), b.result.coupling.values());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn precision_ignores_class_ids(
        seed in any::<u64>(),
        q in 1usize..8,
        m in 2usize..12,
        perm in Just(vec![0usize, 1, 2, 3]).prop_shuffle(),
    ) {
        use rand::Rng;
        let mut rng = common::rng(seed);
        let scores = ScoreMatrix::new(Array2::from_shape_fn((q, m), |_| rng.gen::<f64>())).unwrap();
        let ql: Vec<usize> = (0..q).map(|_| rng.gen_range(0..4)).collect();
        let tl: Vec<usize> = (0..m).map(|_| rng.gen_range(0..4)).collect();
        let qp: Vec<usize> = ql.iter().map(|&c| perm[c]).collect();
        let tp: Vec<usize> = tl.iter().map(|&c| perm[c]).collect();
        for k in 1..=m {
            prop_assert_eq!(
                precision_at_k(&scores, &ql, &tl, k).unwrap(),
                precision_at_k(&scores, &qp, &tp, k).unwrap()
            );
        }
    }
}

#[test]
fn outlier_generator_means_match_reference() {
    let spec = shipped("outliers.json");
    let d = load_domains(&spec).unwrap();
    let means = |set: &PointSet| -> Value {
        cluster_means(set)
            .unwrap()
            .into_iter()
            .map(|(c, m)| json!({ "cluster": c, "mean": m.to_vec() }))
            .collect()
    };
    golden(
        "generator_means",
        json!({ "source": means(&d.source), "target": means(&d.target), "outliers": d.outliers }),
    );
}

#[test]
fn adaptation_accuracy_matches_reference() {
    let run = adaptation_pipeline(&shipped("adaptation.json")).unwrap();
    let m = run.report.metrics;
    golden(
        "adaptation",
        json!({
            "accuracy": m.accuracy,
            "accuracy_barycentric": m.accuracy_barycentric,
            "accuracy_conditional": m.accuracy_conditional,
            "test_rows": run.test,
        }),
    );
}

#[test]
fn retrieval_precision_matches_reference() {
    let run = retrieval_pipeline(&shipped("retrieval.json")).unwrap();
    golden(
        "retrieval",
        json!({ "precision_at_k": run.report.metrics.precision_at_k }),
    );
}

#[test]
fn chosen_bandwidth_matches_reference() {
    let report = circular_validation(&shipped("validate.json")).unwrap();
    golden(
        "validate_bandwidth",
        json!({
            "chosen_bandwidth": report.metrics.chosen_bandwidth,
            "bandwidth_scores": report.metrics.bandwidth_scores,
        }),
    );
}
