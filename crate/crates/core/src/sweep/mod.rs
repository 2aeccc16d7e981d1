//! Model files, grid sweeps over the sector angles, and their output files.

mod model;

pub use model::{
    AgentSpec, AxisSpec, EdgeRef, GraphSpec, GridSpec, Model, ModelError, ModelFile, NamedPartition,
    PartitionSpec,
};

use std::collections::BTreeSet;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::certify::{
    backend_by_name, factorize_agents, solve, CertificationContext, CertifyError, MultiplierMode,
    ProblemSize, SdpBackend, SolverOptions,
};
use crate::graph::LocalizedMatrices;
use crate::lti::{check_nominal_stability, CoprimeFactorPair, NominalCheck};
use crate::multiplier::SectorBounds;

pub const CSV_HEADER: &str = "partition,mode,theta1_deg,theta2_deg,verdict,margin,seconds";

#[derive(Debug, Error)]
pub enum SweepError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Certify(#[from] CertifyError),
    #[error("unknown partition '{0}'")]
    UnknownPartition(String),
    #[error("partition '{0}' is not admissible")]
    Inadmissible(String),
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: io::Error },
}

impl SweepError {
    /// Process exit code for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Certify(CertifyError::NominalUnstable { .. }) => 3,
            Self::Certify(CertifyError::BackendMissing(_)) => 4,
            Self::Io { .. } => 1,
            Self::Certify(_) => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Feasible,
    Infeasible,
    NotEvaluated,
    SolverError,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Feasible => "feasible",
            Self::Infeasible => "infeasible",
            Self::NotEvaluated => "not-evaluated",
            Self::SolverError => "solver-error",
        }
    }
}

impl std::str::FromStr for Verdict {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "feasible" => Ok(Self::Feasible),
            "infeasible" => Ok(Self::Infeasible),
            "not-evaluated" => Ok(Self::NotEvaluated),
            "solver-error" => Ok(Self::SolverError),
            other => Err(format!("unknown verdict '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub partition: String,
    pub mode: MultiplierMode,
    pub theta1: f64,
    pub theta2: f64,
    pub verdict: Verdict,
    /// NaN when the point was not solved.
    pub margin: f64,
    pub seconds: f64,
}

/// Newton-step cost bounds of an interior-point method, evaluated.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NewtonCost {
    /// Per element, `n̆ m̃³ + n̆² m̃² + n̆³`.
    pub fixed_per_element: Vec<u64>,
    /// `Σ ñ m̃³`
    pub free_gradient: u64,
    /// `Σ ñ² m̃²`
    pub free_hessian: u64,
    /// `ň³ + Σ ñ³`
    pub free_inversion: u64,
    /// Multiplier variables shared by more than one element.
    pub coupling_variables: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SizeReport {
    pub partition: String,
    pub elements: Vec<ProblemSize>,
    pub cost: NewtonCost,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartitionReport {
    pub name: String,
    pub admissible: bool,
    pub violations: Vec<String>,
    pub sizes: Option<SizeReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub model: String,
    pub nominal_abscissa: f64,
    pub grid: GridSpec,
    pub modes: Vec<MultiplierMode>,
    pub partitions: Vec<PartitionReport>,
    /// Ordered by partition, mode, `θ1`, `θ2`.
    pub points: Vec<SweepPoint>,
}

impl SweepResult {
    pub fn points_of<'a>(
        &'a self,
        partition: &'a str,
        mode: MultiplierMode,
    ) -> impl Iterator<Item = &'a SweepPoint> + 'a {
        self.points
            .iter()
            .filter(move |p| p.partition == partition && p.mode == mode)
    }

    pub fn certified(&self, partition: &str, mode: MultiplierMode) -> BTreeSet<(u64, u64)> {
        self.points_of(partition, mode)
            .filter(|p| p.verdict == Verdict::Feasible)
            .map(|p| (p.theta1.to_bits(), p.theta2.to_bits()))
            .collect()
    }

    pub fn count(&self, partition: &str, mode: MultiplierMode) -> usize {
        self.points_of(partition, mode)
            .filter(|p| p.verdict == Verdict::Feasible)
            .count()
    }
}

/// Overrides applied on top of the model file.
#[derive(Debug, Clone, Default)]
pub struct SweepOptions {
    /// Worker threads; `None` uses every core.
    pub jobs: Option<usize>,
    pub grid: Option<GridSpec>,
    pub partitions: Option<Vec<String>>,
    pub modes: Option<Vec<MultiplierMode>>,
}

/// Ideal-link stability gate; errors when the network is not stable.
pub fn nominal_gate(model: &Model) -> Result<NominalCheck, SweepError> {
    let nominal = check_nominal_stability(&model.graph, &model.agents).map_err(CertifyError::from)?;
    if !nominal.stable {
        return Err(CertifyError::NominalUnstable {
            abscissa: nominal.abscissa,
        }
        .into());
    }
    Ok(nominal)
}

/// Sector for a grid point, or `None` when it does not contain zero.
pub fn sector_at(theta1: f64, theta2: f64) -> Option<SectorBounds> {
    SectorBounds::from_angles_deg(theta1, theta2)
        .ok()
        .filter(SectorBounds::contains_zero)
}

fn admissibility(part: &NamedPartition) -> (bool, Vec<String>) {
    match &part.partition {
        Ok(_) => (true, Vec::new()),
        Err(a) => (false, a.violations.iter().map(ToString::to_string).collect()),
    }
}

fn size_report(
    model: &Model,
    name: &str,
    ctx: &CertificationContext,
) -> SizeReport {
    let elements = ctx.sizes();
    let c = ctx.partition.len();
    let mut users = vec![0usize; model.graph.ports()];
    for p in 0..c {
        let loc = LocalizedMatrices::new(&model.graph, &ctx.partition, p).expect("element in range");
        for &r in &loc.rows {
            users[r] += 1;
        }
    }
    let coupling_variables = users.iter().filter(|&&u| u > 1).count();
    let pow = |x: usize, k: u32| (x as u64).pow(k);
    let cost = NewtonCost {
        fixed_per_element: elements
            .iter()
            .map(|s| pow(s.n_breve, 1) * pow(s.m_tilde, 3) + pow(s.n_breve, 2) * pow(s.m_tilde, 2) + pow(s.n_breve, 3))
            .collect(),
        free_gradient: elements.iter().map(|s| pow(s.n_tilde, 1) * pow(s.m_tilde, 3)).sum(),
        free_hessian: elements.iter().map(|s| pow(s.n_tilde, 2) * pow(s.m_tilde, 2)).sum(),
        free_inversion: pow(coupling_variables, 3) + elements.iter().map(|s| pow(s.n_tilde, 3)).sum::<u64>(),
        coupling_variables,
    };
    SizeReport {
        partition: name.to_string(),
        elements,
        cost,
    }
}

/// Admissibility and LMI sizes of every partition in the model.
pub fn report_sizes(model: &Model) -> Result<Vec<PartitionReport>, SweepError> {
    let factors = factorize_agents(&model.agents)?;
    partition_reports(model, &factors, None).map(|(reports, _)| reports)
}

type Contexts = Vec<(String, CertificationContext)>;

fn partition_reports(
    model: &Model,
    factors: &[CoprimeFactorPair],
    only: Option<&[String]>,
) -> Result<(Vec<PartitionReport>, Contexts), SweepError> {
    if let Some(names) = only {
        if let Some(missing) = names.iter().find(|n| model.partition(n).is_none()) {
            return Err(SweepError::UnknownPartition(missing.clone()));
        }
    }
    let mut reports = Vec::new();
    let mut contexts = Vec::new();
    for part in &model.partitions {
        if only.is_some_and(|names| !names.contains(&part.name)) {
            continue;
        }
        let (admissible, violations) = admissibility(part);
        let sizes = match &part.partition {
            Ok(p) => {
                let ctx = CertificationContext::new(&model.graph, p, factors)?;
                let sizes = size_report(model, &part.name, &ctx);
                contexts.push((part.name.clone(), ctx));
                Some(sizes)
            }
            Err(_) => {
                log::warn!("partition '{}' is not admissible: {}", part.name, violations.join("; "));
                None
            }
        };
        reports.push(PartitionReport {
            name: part.name.clone(),
            admissible,
            violations,
            sizes,
        });
    }
    Ok((reports, contexts))
}

/// Certifies one grid point; solver errors become a verdict.
pub fn evaluate_point(
    ctx: &CertificationContext,
    backend: &dyn SdpBackend,
    mode: MultiplierMode,
    theta1: f64,
    theta2: f64,
    options: &SolverOptions,
) -> (Verdict, f64) {
    let Some(sector) = sector_at(theta1, theta2) else {
        return (Verdict::NotEvaluated, f64::NAN);
    };
    match ctx
        .problem(sector, mode, options)
        .and_then(|problem| solve(&problem, backend))
    {
        Ok(r) if r.feasible => (Verdict::Feasible, r.margin),
        Ok(r) => (Verdict::Infeasible, r.margin),
        Err(e) => {
            log::warn!("({theta1}, {theta2}) {}: {e}", mode.as_str());
            (Verdict::SolverError, f64::NAN)
        }
    }
}

/// Evaluates every grid point for every admissible partition and mode.
pub fn run_sweep(model: &Model, opts: &SweepOptions) -> Result<SweepResult, SweepError> {
    let backend = backend_by_name(&model.file.solver.backend)?;
    let nominal = nominal_gate(model)?;
    let factors = factorize_agents(&model.agents)?;
    let (partitions, contexts) = partition_reports(model, &factors, opts.partitions.as_deref())?;

    let grid = opts.grid.unwrap_or(model.file.grid);
    let modes = opts.modes.clone().unwrap_or_else(|| model.file.modes.clone());
    let (t1, t2) = (grid.theta1.values(), grid.theta2.values());
    let mut jobs = Vec::with_capacity(contexts.len() * modes.len() * t1.len() * t2.len());
    for (c, _) in contexts.iter().enumerate() {
        for &mode in &modes {
            for &a in &t1 {
                for &b in &t2 {
                    jobs.push((c, mode, a, b));
                }
            }
        }
    }
    // parallelism is across grid points
    let mut options = model.file.solver.clone();
    options.parallel = false;

    let run = || {
        jobs.par_iter()
            .map(|&(c, mode, theta1, theta2)| {
                let (name, ctx) = &contexts[c];
                let start = Instant::now();
                let (verdict, margin) =
                    evaluate_point(ctx, backend.as_ref(), mode, theta1, theta2, &options);
                SweepPoint {
                    partition: name.clone(),
                    mode,
                    theta1,
                    theta2,
                    verdict,
                    margin,
                    seconds: start.elapsed().as_secs_f64(),
                }
            })
            .collect::<Vec<_>>()
    };
    let points = match opts.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CertifyError::SolverFailure(e.to_string()))?
            .install(run),
        None => run(),
    };

    Ok(SweepResult {
        model: model.file.name.clone(),
        nominal_abscissa: nominal.abscissa,
        grid,
        modes,
        partitions,
        points,
    })
}

#[derive(Debug, Clone, Serialize)]
struct CertifiedCount {
    partition: String,
    mode: MultiplierMode,
    certified: usize,
    evaluated: usize,
    solver_errors: usize,
}

#[derive(Serialize)]
struct Summary<'a> {
    model: &'a str,
    nominal_abscissa: f64,
    grid: GridSpec,
    modes: &'a [MultiplierMode],
    partitions: &'a [PartitionReport],
    counts: Vec<CertifiedCount>,
}

/// Paths written by [`emit_outputs`].
#[derive(Debug, Clone)]
pub struct OutputFiles {
    pub csv: PathBuf,
    pub summary: PathBuf,
    pub regions: PathBuf,
}

/// Writes `sweep.csv`, `summary.json` and `regions.dat` into `dir`.
///
/// With `timing` off the seconds column is written as `0`, which makes reruns
/// byte-identical.
pub fn emit_outputs(result: &SweepResult, dir: &Path, timing: bool) -> Result<OutputFiles, SweepError> {
    let io_err = |path: &Path| {
        let path = path.display().to_string();
        move |source| SweepError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let files = OutputFiles {
        csv: dir.join("sweep.csv"),
        summary: dir.join("summary.json"),
        regions: dir.join("regions.dat"),
    };

    let mut csv = Vec::new();
    write_csv(result, timing, &mut csv).map_err(io_err(&files.csv))?;
    fs::write(&files.csv, csv).map_err(io_err(&files.csv))?;

    let summary = Summary {
        model: &result.model,
        nominal_abscissa: result.nominal_abscissa,
        grid: result.grid,
        modes: &result.modes,
        partitions: &result.partitions,
        counts: counts(result),
    };
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    fs::write(&files.summary, json + "\n").map_err(io_err(&files.summary))?;

    let mut dat = Vec::new();
    write_regions(result, &mut dat).map_err(io_err(&files.regions))?;
    fs::write(&files.regions, dat).map_err(io_err(&files.regions))?;
    Ok(files)
}

fn counts(result: &SweepResult) -> Vec<CertifiedCount> {
    let mut out = Vec::new();
    for part in result.partitions.iter().filter(|p| p.admissible) {
        for &mode in &result.modes {
            let pts: Vec<_> = result.points_of(&part.name, mode).collect();
            out.push(CertifiedCount {
                partition: part.name.clone(),
                mode,
                certified: pts.iter().filter(|p| p.verdict == Verdict::Feasible).count(),
                evaluated: pts.iter().filter(|p| p.verdict != Verdict::NotEvaluated).count(),
                solver_errors: pts.iter().filter(|p| p.verdict == Verdict::SolverError).count(),
            });
        }
    }
    out
}

fn format_margin(margin: f64) -> String {
    if margin.is_finite() {
        format!("{margin:.6e}")
    } else {
        String::new()
    }
}

/// CSV rows in sweep order.
pub fn write_csv<W: Write>(result: &SweepResult, timing: bool, w: W) -> io::Result<()> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    out.write_record(CSV_HEADER.split(','))?;
    for p in &result.points {
        out.write_record([
            p.partition.as_str(),
            p.mode.as_str(),
            &p.theta1.to_string(),
            &p.theta2.to_string(),
            p.verdict.as_str(),
            &format_margin(p.margin),
            &if timing { format!("{:.6}", p.seconds) } else { "0".to_string() },
        ])?;
    }
    out.flush()
}

/// Reads the rows written by [`write_csv`].
pub fn read_csv(path: &Path) -> Result<Vec<SweepPoint>, SweepError> {
    let bad = |line: usize, message: String| {
        SweepError::Model(ModelError::Invalid {
            field: format!("{}:{line}", path.display()),
            message,
        })
    };
    let mut reader = csv::Reader::from_path(path).map_err(|e| SweepError::Io {
        path: path.display().to_string(),
        source: io::Error::other(e),
    })?;
    let mut points = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let line = row + 2;
        let record = record.map_err(|e| bad(line, e.to_string()))?;
        if record.len() != 7 {
            return Err(bad(line, format!("expected 7 fields, got {}", record.len())));
        }
        let num = |i: usize| -> Result<f64, SweepError> {
            if record[i].is_empty() {
                return Ok(f64::NAN);
            }
            record[i]
                .parse()
                .map_err(|_| bad(line, format!("field {} is not a number", i + 1)))
        };
        points.push(SweepPoint {
            partition: record[0].to_string(),
            mode: record[1].parse().map_err(|e| bad(line, e))?,
            theta1: num(2)?,
            theta2: num(3)?,
            verdict: record[4].parse().map_err(|e| bad(line, e))?,
            margin: num(5)?,
            seconds: num(6)?,
        });
    }
    Ok(points)
}

/// Certified masks as gnuplot datasets, one `index` per partition and mode;
/// columns `theta1 theta2 certified`, blank line between `θ1` rows.
pub fn write_regions<W: Write>(result: &SweepResult, mut w: W) -> io::Result<()> {
    let t1 = result.grid.theta1.values();
    let n2 = result.grid.theta2.steps;
    let mut first = true;
    for part in result.partitions.iter().filter(|p| p.admissible) {
        for &mode in &result.modes {
            if !first {
                writeln!(w, "\n")?;
            }
            first = false;
            writeln!(w, "# {} {}", part.name, mode.as_str())?;
            let pts: Vec<_> = result.points_of(&part.name, mode).collect();
            for (row, chunk) in pts.chunks(n2).enumerate().take(t1.len()) {
                if row > 0 {
                    writeln!(w)?;
                }
                for p in chunk {
                    let v = u8::from(p.verdict == Verdict::Feasible);
                    writeln!(w, "{} {} {v}", p.theta1, p.theta2)?;
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const TINY: &str = r#"{
        "name": "tiny",
        "graph": {"vertices": 3, "edges": [[1, 2], [2, 3]]},
        "agents": [
            {"num": [0.5], "den": [1, 2]},
            {"num": [0.5], "den": [1, 3]},
            {"num": [0.5], "den": [1, 4]}
        ],
        "partitions": [
            {"name": "whole", "elements": [["1:2"]]},
            {"name": "bad", "elements": [[1], [2]]}
        ],
        "grid": {"theta1": {"from": -30, "to": 30, "steps": 3}, "theta2": {"from": -30, "to": 30, "steps": 3}},
        "modes": ["free", "fixed"]
    }"#;

    #[test]
    fn sweep_marks_points_and_skips_inadmissible() {
        let model = Model::parse(TINY).unwrap();
        let result = run_sweep(&model, &SweepOptions { jobs: Some(2), ..Default::default() }).unwrap();
        assert_eq!(result.points.len(), 2 * 9);
        assert!(!result.partitions[1].admissible);
        assert!(result.partitions[1].sizes.is_none());
        for p in &result.points {
            let expect_skip = p.theta1 > 0.0 || p.theta2 < 0.0;
            assert_eq!(p.verdict == Verdict::NotEvaluated, expect_skip, "{p:?}");
        }
        let origin = result
            .points
            .iter()
            .filter(|p| p.theta1 == 0.0 && p.theta2 == 0.0)
            .collect::<Vec<_>>();
        assert_eq!(origin.len(), 2);
        assert!(origin.iter().all(|p| p.verdict == Verdict::Feasible && p.margin >= 1e-7));
    }

    #[test]
    fn outputs_are_reproducible() {
        let model = Model::parse(TINY).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let opts = SweepOptions::default();
        let a = emit_outputs(&run_sweep(&model, &opts).unwrap(), &dir.path().join("a"), false).unwrap();
        let b = emit_outputs(&run_sweep(&model, &opts).unwrap(), &dir.path().join("b"), false).unwrap();
        let text = fs::read_to_string(&a.csv).unwrap();
        let back = read_csv(&a.csv).unwrap();
        assert_eq!(back.len(), 18);
        assert_eq!(back[4].verdict, Verdict::Feasible);
        assert_eq!(text, fs::read_to_string(&b.csv).unwrap());
        assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
        assert_eq!(text.lines().count(), 1 + 18);
        let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(&a.summary).unwrap()).unwrap();
        assert_eq!(summary["partitions"][1]["admissible"], false);
        assert!(summary["counts"][0]["certified"].as_u64().unwrap() >= 1);
        let regions = fs::read_to_string(&a.regions).unwrap();
        assert!(regions.starts_with("# whole free\n-30 -30 0\n"));
    }

    #[test]
    fn single_edge_sizes() {
        let text = r#"{
            "graph": {"vertices": 2, "edges": [[1, 2]]},
            "agents": [{"num": [1], "den": [1, 1]}, {"num": [1], "den": [1, 2]}],
            "partitions": [{"name": "one", "elements": [[1]]}]
        }"#;
        let model = Model::parse(text).unwrap();
        let reports = report_sizes(&model).unwrap();
        let s = reports[0].sizes.as_ref().unwrap().elements[0];
        assert_eq!((s.n_hat, s.m_hat, s.m_tilde, s.n_tilde), (2, 2, 4, 6));
        assert_eq!(reports[0].sizes.as_ref().unwrap().cost.coupling_variables, 0);
    }

    #[test]
    fn unknown_partition_is_reported() {
        let model = Model::parse(TINY).unwrap();
        let err = run_sweep(
            &model,
            &SweepOptions {
                partitions: Some(vec!["nope".into()]),
                ..Default::default()
            },
        )
        .unwrap_err();
        assert!(matches!(err, SweepError::UnknownPartition(_)));
        assert_eq!(err.exit_code(), 2);
    }
}
