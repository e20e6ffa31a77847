//! JSON experiment specs.
//!
//! ```json
//! {
//!   "scenario": "adaptation",
//!   "generator": { "seed": 7, "source_sizes": [20, 20], "target_sizes": [10, 30] },
//!   "solver": { "lambda": 100, "epsilon": 1, "bandwidth": 0.5 },
//!   "projection": { "mode": "conditional" },
//!   "out": "runs/adapt"
//! }
//! ```
//!
//! Only `scenario` and `generator.seed` are required.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{InfoOtError, Result};
use crate::projection::ProjectionRequest;
use crate::solver::SolverConfig;
use crate::synthetic::GeneratorSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    PointCloud,
    Imbalance,
    Outliers,
    Adaptation,
    Retrieval,
}

/// Which objective `solve` and `project` minimize.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// `⟨Γ, C⟩ − λ Î(Γ)` with euclidean cross cost.
    #[default]
    Fused,
    /// `−Î(Γ)`; no cross cost.
    Infoot,
    /// Plain entropic OT on the cross cost.
    Sinkhorn,
}

/// Point sets read from disk instead of generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataFiles {
    pub source: PathBuf,
    pub target: PathBuf,
    /// Square CSVs replacing the euclidean intra-domain distances.
    #[serde(default)]
    pub source_distances: Option<PathBuf>,
    #[serde(default)]
    pub target_distances: Option<PathBuf>,
    /// Held-out source-space points for `retrieve`.
    #[serde(default)]
    pub queries: Option<PathBuf>,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_grid() -> Vec<f64> {
    vec![0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8]
}

fn default_penalty() -> f64 {
    5000.0
}

fn default_holdout() -> f64 {
    0.1
}

fn default_ks() -> Vec<usize> {
    vec![1, 5, 15]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub scenario: Scenario,
    pub generator: GeneratorSpec,
    #[serde(default)]
    pub method: Method,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub projection: ProjectionRequest,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub data: Option<DataFiles>,
    #[serde(default = "default_grid")]
    pub validation_grid: Vec<f64>,
    /// Added to source distances between differently labelled points.
    #[serde(default = "default_penalty")]
    pub class_penalty: f64,
    /// Fraction of target points held out for scoring in `adapt`.
    #[serde(default = "default_holdout")]
    pub holdout_fraction: f64,
    #[serde(default = "default_ks")]
    pub precision_k: Vec<usize>,
}

impl ExperimentSpec {
    pub fn new(scenario: Scenario, generator: GeneratorSpec) -> Self {
        Self {
            scenario,
            generator,
            method: Method::default(),
            solver: SolverConfig::default(),
            projection: ProjectionRequest::default(),
            out: default_out(),
            data: None,
            validation_grid: default_grid(),
            class_penalty: default_penalty(),
            holdout_fraction: default_holdout(),
            precision_k: default_ks(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self =
            serde_json::from_str(text).map_err(|e| InfoOtError::Spec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut spec = Self::from_json(&text)
            .map_err(|e| InfoOtError::Spec(format!("{}: {e}", path.display())))?;
        if let Some(data) = spec.data.as_mut() {
            let base = path.parent().unwrap_or(Path::new("."));
            for p in [
                Some(&mut data.source),
                Some(&mut data.target),
                data.source_distances.as_mut(),
                data.target_distances.as_mut(),
                data.queries.as_mut(),
            ]
            .into_iter()
            .flatten()
            {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        self.solver.validate()?;
        self.projection.validate()?;
        if self.validation_grid.is_empty() {
            return Err(InfoOtError::InvalidInput("validation grid is empty".into()));
        }
        if let Some(h) = self
            .validation_grid
            .iter()
            .find(|h| !(**h > 0.0 && h.is_finite()))
        {
            return Err(InfoOtError::InvalidInput(format!(
                "validation grid entries must be positive, got {h}"
            )));
        }
        if !(self.class_penalty >= 0.0 && self.class_penalty.is_finite()) {
            return Err(InfoOtError::InvalidInput(format!(
                "class_penalty must be nonnegative, got {}",
                self.class_penalty
            )));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(InfoOtError::InvalidInput(format!(
                "holdout_fraction must be in [0, 1), got {}",
                self.holdout_fraction
            )));
        }
        if self.precision_k.contains(&0) {
            return Err(InfoOtError::InvalidInput("precision k must be >= 1".into()));
        }
        Ok(())
    }
}
