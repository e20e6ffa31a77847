//! Command-line front end: `infoot <command> <spec.json> [overrides]`.
//!
//! Exit codes: 0 on success, 1 on invalid input or spec, 2 when a solve did
//! not converge (outputs are still written).

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ndarray::{Array2, ArrayView2};

use crate::error::Result;
use crate::io;
use crate::kernels::PointSet;
use crate::pipelines::{
    adaptation_on, alignment_pipeline, circular_validation, load_domains, retrieval_on, EvalReport,
};
use crate::projection::ProjectionMode;
use crate::spec::ExperimentSpec;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "infoot",
    version,
    about = "Optimal transport with kernelized mutual information"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the scenario's source and target point sets.
    Generate(RunArgs),
    /// Solve for the coupling only.
    Solve(RunArgs),
    /// Solve and project the source into the target domain.
    Project(RunArgs),
    /// Domain adaptation with a 1-NN classifier on the projected source.
    Adapt(RunArgs),
    /// Rank targets for held-out queries by importance weight.
    Retrieve(RunArgs),
    /// Pick the kernel bandwidth by circular validation.
    ValidateBandwidth(RunArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Experiment spec (JSON).
    spec: PathBuf,
    /// Weight of the mutual-information term.
    #[arg(long)]
    lambda: Option<f64>,
    /// Entropic regularization.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Solver kernel bandwidth.
    #[arg(long)]
    bandwidth: Option<f64>,
    /// Generator and solver seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Projection: barycentric or conditional.
    #[arg(long)]
    mode: Option<ProjectionMode>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn resolve(&self) -> Result<ExperimentSpec> {
        let mut spec = ExperimentSpec::load(&self.spec)?;
        if let Some(v) = self.lambda {
            spec.solver.lambda = v;
        }
        if let Some(v) = self.epsilon {
            spec.solver.epsilon = v;
        }
        if let Some(v) = self.bandwidth {
            spec.solver.bandwidth = v;
        }
        if let Some(v) = self.seed {
            spec.generator.seed = v;
            spec.solver.seed = v;
        }
        if let Some(v) = self.mode {
            spec.projection.mode = v;
        }
        if let Some(v) = &self.out {
            spec.out = v.clone();
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// Parse `argv` (program name first), run the command and return the exit code.
pub fn cli_run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                EXIT_INVALID
            } else {
                EXIT_OK
            };
        }
    };
    match run(cli.command) {
        Ok(true) => EXIT_OK,
        Ok(false) => {
            eprintln!("warning: solver did not converge; results written anyway");
            EXIT_NOT_CONVERGED
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INVALID
        }
    }
}

fn run(command: Command) -> Result<bool> {
    match command {
        Command::Generate(args) => generate_cmd(&args.resolve()?),
        Command::Solve(args) => align_cmd(&args.resolve()?, false),
        Command::Project(args) => align_cmd(&args.resolve()?, true),
        Command::Adapt(args) => adapt_cmd(&args.resolve()?),
        Command::Retrieve(args) => retrieve_cmd(&args.resolve()?),
        Command::ValidateBandwidth(args) => validate_cmd(&args.resolve()?),
    }
}

fn prepare(spec: &ExperimentSpec) -> Result<&Path> {
    fs::create_dir_all(&spec.out)?;
    Ok(&spec.out)
}

fn write_report(dir: &Path, report: &EvalReport) -> Result<bool> {
    let text = serde_json::to_string_pretty(report).expect("report serializes");
    fs::write(dir.join("report.json"), text + "\n")?;
    Ok(report.converged)
}

fn write_projection_file(dir: &Path, coords: ArrayView2<f64>) -> Result<()> {
    let ids: Vec<usize> = (0..coords.nrows()).collect();
    io::write_projection(fs::File::create(dir.join("projection.csv"))?, &ids, coords)
}

fn write_plot(
    dir: &Path,
    source: &PointSet,
    target: &PointSet,
    projection: Option<ArrayView2<f64>>,
    outliers: &[usize],
) -> Result<()> {
    io::write_plot_points(
        fs::File::create(dir.join("plot_points.csv"))?,
        source,
        target,
        projection,
        outliers,
    )
}

fn generate_cmd(spec: &ExperimentSpec) -> Result<bool> {
    let start = std::time::Instant::now();
    let domains = load_domains(spec)?;
    let dir = prepare(spec)?;
    io::write_points_file(&dir.join("source.csv"), &domains.source)?;
    io::write_points_file(&dir.join("target.csv"), &domains.target)?;
    if let Some(q) = &domains.queries {
        io::write_points_file(&dir.join("queries.csv"), q)?;
    }
    write_plot(
        dir,
        &domains.source,
        &domains.target,
        None,
        &domains.outliers,
    )?;
    let mut report = EvalReport::new(spec);
    report.wall_time_secs = start.elapsed().as_secs_f64();
    write_report(dir, &report)
}

fn align_cmd(spec: &ExperimentSpec, project: bool) -> Result<bool> {
    let run = alignment_pipeline(spec, project)?;
    let dir = prepare(spec)?;
    io::write_matrix_file(&dir.join("coupling.csv"), run.result.coupling.view())?;
    if let Some(p) = &run.projection {
        write_projection_file(dir, p.view())?;
    }
    if let Some(q) = &run.query_projection {
        let ids: Vec<usize> = (0..q.nrows()).collect();
        io::write_projection(
            fs::File::create(dir.join("query_projection.csv"))?,
            &ids,
            q.view(),
        )?;
    }
    let d = &run.domains;
    write_plot(
        dir,
        &d.source,
        &d.target,
        run.projection.as_ref().map(|p| p.view()),
        &d.outliers,
    )?;
    write_report(dir, &run.report)
}

fn adapt_cmd(spec: &ExperimentSpec) -> Result<bool> {
    let domains = load_domains(spec)?;
    let run = adaptation_on(&domains, spec)?;
    let dir = prepare(spec)?;
    let target_train = domains.target.select(&run.train)?;
    io::write_matrix_file(&dir.join("coupling.csv"), run.result.coupling.view())?;
    write_projection_file(dir, run.projection.view())?;
    write_plot(
        dir,
        &domains.source,
        &target_train,
        Some(run.projection.view()),
        &[],
    )?;
    write_report(dir, &run.report)
}

fn retrieve_cmd(spec: &ExperimentSpec) -> Result<bool> {
    let domains = load_domains(spec)?;
    let run = retrieval_on(&domains, spec)?;
    let dir = prepare(spec)?;
    io::write_matrix_file(&dir.join("coupling.csv"), run.result.coupling.view())?;
    io::write_matrix_file(&dir.join("scores.csv"), run.scores.values().view())?;
    let targets = domains.target.points();
    let coords: Array2<f64> = run.scores.values().dot(targets);
    write_projection_file(dir, coords.view())?;
    let queries = domains.queries.as_ref().expect("retrieval checked queries");
    write_plot(
        dir,
        queries,
        &domains.target,
        Some(coords.view()),
        &domains.outliers,
    )?;
    write_report(dir, &run.report)
}

fn validate_cmd(spec: &ExperimentSpec) -> Result<bool> {
    let report = circular_validation(spec)?;
    let dir = prepare(spec)?;
    write_report(dir, &report)
}
