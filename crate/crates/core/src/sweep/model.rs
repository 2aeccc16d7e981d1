use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::certify::{MultiplierMode, SolverOptions};
use crate::graph::{Admissibility, EdgePartition, GraphError, GraphTopology};
use crate::lti::{AgentModel, LtiError, StateSpace, TransferFunction};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("model file, line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("model file, {field}: {message}")]
    Invalid { field: String, message: String },
    #[error("model file, graph: {0}")]
    Graph(#[from] GraphError),
    #[error("model file, agents[{agent}]: {source}")]
    Agent { agent: usize, source: LtiError },
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ModelError {
    ModelError::Invalid {
        field: field.into(),
        message: message.into(),
    }
}

/// JSON model file; vertex and edge ids are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    #[serde(default)]
    pub name: String,
    pub graph: GraphSpec,
    pub agents: Vec<AgentSpec>,
    #[serde(default)]
    pub partitions: Vec<PartitionSpec>,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default = "default_modes")]
    pub modes: Vec<MultiplierMode>,
    #[serde(default)]
    pub solver: SolverOptions,
}

fn default_modes() -> Vec<MultiplierMode> {
    vec![MultiplierMode::Free, MultiplierMode::Fixed]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    pub vertices: usize,
    pub edges: Vec<[usize; 2]>,
}

/// Agent dynamics: a SISO transfer function broadcast over the agent's
/// links, or an explicit realization with one input per link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum AgentSpec {
    TransferFunction {
        num: Vec<f64>,
        den: Vec<f64>,
    },
    StateSpace {
        a: Vec<Vec<f64>>,
        b: Vec<Vec<f64>>,
        c: Vec<Vec<f64>>,
        d: Vec<Vec<f64>>,
    },
}

/// A single edge id or an inclusive range `"a:b"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EdgeRef {
    Id(usize),
    Range(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionSpec {
    pub name: String,
    pub elements: Vec<Vec<EdgeRef>>,
}

/// Inclusive, uniformly spaced angle axis in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    pub from: f64,
    pub to: f64,
    pub steps: usize,
}

impl AxisSpec {
    pub fn values(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.from];
        }
        (0..self.steps)
            .map(|k| self.from + (self.to - self.from) * k as f64 / (self.steps - 1) as f64)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub theta1: AxisSpec,
    pub theta2: AxisSpec,
}

impl Default for GridSpec {
    fn default() -> Self {
        let axis = AxisSpec {
            from: -89.0,
            to: 89.0,
            steps: 61,
        };
        Self {
            theta1: axis,
            theta2: axis,
        }
    }
}

impl GridSpec {
    /// Square grid with `steps` points per axis over `[from, to]`.
    pub fn square(from: f64, to: f64, steps: usize) -> Self {
        let axis = AxisSpec { from, to, steps };
        Self {
            theta1: axis,
            theta2: axis,
        }
    }
}

/// A named partition and the outcome of its admissibility check.
#[derive(Debug, Clone)]
pub struct NamedPartition {
    pub name: String,
    /// 0-based edge ids per element.
    pub sets: Vec<Vec<usize>>,
    pub partition: Result<EdgePartition, Admissibility>,
}

/// Parsed and validated model.
#[derive(Debug, Clone)]
pub struct Model {
    pub file: ModelFile,
    pub graph: GraphTopology,
    pub agents: Vec<AgentModel>,
    pub partitions: Vec<NamedPartition>,
    /// SHA-256 of the source text; seeds randomized checks.
    pub digest: [u8; 32],
}

impl Model {
    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ModelError> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| ModelError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        let mut model = Self::from_file(file)?;
        model.digest = Sha256::digest(text.as_bytes()).into();
        Ok(model)
    }

    pub fn from_file(file: ModelFile) -> Result<Self, ModelError> {
        let n = file.graph.vertices;
        let mut edges = Vec::with_capacity(file.graph.edges.len());
        for (k, &[i, j]) in file.graph.edges.iter().enumerate() {
            if i == 0 || j == 0 {
                return Err(invalid(format!("graph.edges[{k}]"), "vertex ids are 1-based"));
            }
            edges.push((i - 1, j - 1));
        }
        let graph = GraphTopology::new(n, &edges)?;

        if file.agents.len() != n {
            return Err(invalid(
                "agents",
                format!("{} agents for {n} vertices", file.agents.len()),
            ));
        }
        let agents = file
            .agents
            .iter()
            .enumerate()
            .map(|(i, spec)| build_agent(spec, graph.degree(i)).map_err(|source| ModelError::Agent { agent: i, source }))
            .collect::<Result<Vec<_>, _>>()?;

        let mut partitions = Vec::with_capacity(file.partitions.len());
        for (q, spec) in file.partitions.iter().enumerate() {
            if partitions.iter().any(|p: &NamedPartition| p.name == spec.name) {
                return Err(invalid(
                    format!("partitions[{q}].name"),
                    format!("duplicate partition name '{}'", spec.name),
                ));
            }
            let sets = spec
                .elements
                .iter()
                .enumerate()
                .map(|(e, refs)| {
                    expand_edges(refs, graph.m())
                        .map_err(|msg| invalid(format!("partitions[{q}].elements[{e}]"), msg))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let check = EdgePartition::check(&graph, &sets);
            let partition = if check.is_admissible() {
                Ok(EdgePartition::new(&graph, &sets).expect("checked admissible"))
            } else {
                Err(check)
            };
            partitions.push(NamedPartition {
                name: spec.name.clone(),
                sets,
                partition,
            });
        }

        for (field, axis) in [("grid.theta1", file.grid.theta1), ("grid.theta2", file.grid.theta2)] {
            for v in [axis.from, axis.to] {
                if !(v > -90.0 && v < 90.0) {
                    return Err(invalid(field, format!("angle {v} outside (-90, 90)")));
                }
            }
            if axis.steps == 0 {
                return Err(invalid(field, "steps must be positive"));
            }
        }
        if file.modes.is_empty() {
            return Err(invalid("modes", "at least one mode is required"));
        }

        Ok(Self {
            file,
            graph,
            agents,
            partitions,
            digest: [0; 32],
        })
    }

    pub fn partition(&self, name: &str) -> Option<&NamedPartition> {
        self.partitions.iter().find(|p| p.name == name)
    }

    /// First eight digest bytes as a seed.
    pub fn seed(&self) -> u64 {
        u64::from_le_bytes(self.digest[..8].try_into().expect("8 bytes"))
    }
}

fn build_agent(spec: &AgentSpec, degree: usize) -> Result<AgentModel, LtiError> {
    match spec {
        AgentSpec::TransferFunction { num, den } => {
            AgentModel::from_transfer_function(&TransferFunction::new(num.clone(), den.clone()), degree)
        }
        AgentSpec::StateSpace { a, b, c, d } => {
            let nx = a.len();
            let a = rows_to_matrix(a, nx, nx, "A")?;
            let nu = d.first().map_or(degree, Vec::len);
            let b = rows_to_matrix(b, nx, nu, "B")?;
            let c = rows_to_matrix(c, d.len(), nx, "C")?;
            let d = rows_to_matrix(d, c.nrows(), nu, "D")?;
            let agent = AgentModel::from_state_space(StateSpace::new(a, b, c, d)?)?;
            if agent.inputs() != degree {
                return Err(LtiError::DimensionMismatch(format!(
                    "agent has {} inputs but {degree} links",
                    agent.inputs()
                )));
            }
            Ok(agent)
        }
    }
}

fn rows_to_matrix(rows: &[Vec<f64>], nr: usize, nc: usize, name: &str) -> Result<DMatrix<f64>, LtiError> {
    if rows.len() != nr || rows.iter().any(|r| r.len() != nc) {
        return Err(LtiError::DimensionMismatch(format!("{name} must be {nr}x{nc}")));
    }
    Ok(DMatrix::from_fn(nr, nc, |r, c| rows[r][c]))
}

/// 1-based edge references to sorted, de-duplicated 0-based ids.
fn expand_edges(refs: &[EdgeRef], m: usize) -> Result<Vec<usize>, String> {
    let mut out = Vec::new();
    for r in refs {
        let (lo, hi) = match r {
            EdgeRef::Id(k) => (*k, *k),
            EdgeRef::Range(s) => {
                let (a, b) = s
                    .split_once(':')
                    .ok_or_else(|| format!("edge range '{s}' is not of the form 'a:b'"))?;
                let parse = |t: &str| {
                    t.trim()
                        .parse::<usize>()
                        .map_err(|_| format!("edge range '{s}' has a non-integer bound"))
                };
                (parse(a)?, parse(b)?)
            }
        };
        if lo == 0 || hi > m || lo > hi {
            return Err(format!("edge ids {lo}..={hi} outside 1..={m}"));
        }
        out.extend(lo - 1..hi);
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}
