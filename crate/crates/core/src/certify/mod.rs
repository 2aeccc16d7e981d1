//! KYP-form LMIs for partitioned certificates, their packaging as linear
//! SDPs, and the interpretation of solver output.
//!
//! Every block is solved in margin form: maximize `t` subject to
//! `M_p(Q_p, λ, ε_p) ⪯ -t I`. A point is certified when `t* ≥ t_accept` and an
//! independent re-evaluation of each block confirms `λ_max(M_p) ≤ -t*/2`.

mod clarabel;
mod kyp;
mod sdp;

pub use self::clarabel::ClarabelBackend;
pub use kyp::{build_kyp_lmi, LmiBlock, ProblemSize};
pub use sdp::{svec, Bound, LinearSdp, SdpBackend, SdpSolution, SdpStatus, SymAffine};

use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{EdgePartition, GraphTopology};
use crate::lti::{
    check_nominal_stability, coprime_factorize, stacked_realization, to_complex, AgentModel,
    CoprimeFactorPair, FeedbackDesign, LtiError, StateSpace,
};
use crate::multiplier::{AssembledBlocks, MultiplierError, SectorBounds};

/// Environment variable that turns on solver progress output.
pub const VERBOSE_ENV: &str = "NETCERT_SOLVER_VERBOSE";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CertifyError {
    #[error(transparent)]
    Lti(#[from] LtiError),
    #[error(transparent)]
    Multiplier(#[from] MultiplierError),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("solver failure: {0}")]
    SolverFailure(String),
    #[error("network with ideal links is not stable (spectral abscissa {abscissa:.3e})")]
    NominalUnstable { abscissa: f64 },
    #[error("unknown SDP backend '{0}'")]
    BackendMissing(String),
}

/// Whether the link multipliers `λ` are decision variables or frozen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MultiplierMode {
    /// Shared decision variables; overlapping elements are coupled.
    Free,
    /// Fixed values; each element is an independent SDP.
    Fixed,
}

impl MultiplierMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Free => "free",
            Self::Fixed => "fixed",
        }
    }
}

impl std::str::FromStr for MultiplierMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "free" => Ok(Self::Free),
            "fixed" => Ok(Self::Fixed),
            other => Err(format!("unknown multiplier mode '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub backend: String,
    /// Lower bound on every free `λ`.
    pub lambda_floor: f64,
    /// Upper bound on every free `λ`; removes the scaling freedom of the homogeneous LMIs.
    pub lambda_cap: f64,
    /// Value of every `λ` in fixed mode.
    pub fixed_lambda: f64,
    pub epsilon_floor: f64,
    pub t_cap: f64,
    pub t_accept: f64,
    pub max_iterations: u32,
    pub tolerance: f64,
    pub verbose: bool,
    /// Solve fixed-mode elements concurrently.
    pub parallel: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            backend: "clarabel".into(),
            lambda_floor: 1e-7,
            lambda_cap: 1.0,
            fixed_lambda: 1.0,
            epsilon_floor: 1e-9,
            t_cap: 1e3,
            t_accept: 1e-7,
            max_iterations: 200,
            tolerance: 1e-8,
            verbose: std::env::var(VERBOSE_ENV).is_ok_and(|v| !v.is_empty() && v != "0"),
            parallel: true,
        }
    }
}

/// Backend registered under `name`.
pub fn backend_by_name(name: &str) -> Result<Box<dyn SdpBackend>, CertifyError> {
    match name {
        "clarabel" => Ok(Box::new(ClarabelBackend)),
        other => Err(CertifyError::BackendMissing(other.to_string())),
    }
}

/// One partition element: its stacked factors, multiplier blocks and LMI.
#[derive(Debug, Clone)]
pub struct ElementProblem {
    pub stacked: StateSpace,
    pub blocks: AssembledBlocks,
    pub lmi: LmiBlock,
}

/// All LMIs of one partition at one sector point.
#[derive(Debug, Clone)]
pub struct CertificateProblem {
    pub mode: MultiplierMode,
    /// Number of sub-system ports `2m`; one `λ` per port.
    pub ports: usize,
    pub elements: Vec<ElementProblem>,
    pub options: SolverOptions,
}

/// Verdict and solution of a certification problem.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateResult {
    pub mode: MultiplierMode,
    pub feasible: bool,
    /// Attained margin `t*`; the minimum over elements in fixed mode.
    pub margin: f64,
    /// `λ` per sub-system port.
    pub lambda: Vec<f64>,
    pub epsilon: Vec<f64>,
    /// Upper-triangle entries of each `Q_p`.
    pub q: Vec<Vec<f64>>,
    /// Solver margin of each element (equal to `margin` in free mode).
    pub block_margins: Vec<f64>,
    /// Largest eigenvalue of each block at the returned variables, re-evaluated.
    pub block_max_eigenvalues: Vec<f64>,
    pub status: String,
    pub numerical_warning: bool,
    pub iterations: u32,
    pub seconds: f64,
}

/// Independent re-evaluation of a result.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub max_eigenvalues: Vec<f64>,
    /// `-t*/2`
    pub threshold: f64,
    /// Elements whose largest eigenvalue exceeds the threshold.
    pub flagged: Vec<usize>,
    pub multipliers_positive: bool,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.flagged.is_empty() && self.multipliers_positive
    }
}

/// Per-partition data that does not depend on the sector.
#[derive(Debug, Clone)]
pub struct CertificationContext {
    pub graph: GraphTopology,
    pub partition: EdgePartition,
    pub stacked: Vec<StateSpace>,
}

impl CertificationContext {
    pub fn new(
        g: &GraphTopology,
        part: &EdgePartition,
        factors: &[CoprimeFactorPair],
    ) -> Result<Self, CertifyError> {
        let stacked = (0..part.len())
            .map(|p| stacked_realization(g, part, p, factors))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            graph: g.clone(),
            partition: part.clone(),
            stacked,
        })
    }

    /// Sizes of each element's LMI.
    pub fn sizes(&self) -> Vec<ProblemSize> {
        self.stacked
            .iter()
            .enumerate()
            .map(|(p, s)| {
                ProblemSize::new(p, self.partition.vertices(p).len(), s.nx(), s.nu())
            })
            .collect()
    }

    pub fn problem(
        &self,
        sector: SectorBounds,
        mode: MultiplierMode,
        options: &SolverOptions,
    ) -> Result<CertificateProblem, CertifyError> {
        let elements = self
            .stacked
            .iter()
            .enumerate()
            .map(|(p, stacked)| {
                let blocks = AssembledBlocks::new(&self.graph, &self.partition, p, sector)?;
                let lmi = build_kyp_lmi(stacked, &blocks)?;
                Ok(ElementProblem {
                    stacked: stacked.clone(),
                    blocks,
                    lmi,
                })
            })
            .collect::<Result<_, CertifyError>>()?;
        Ok(CertificateProblem {
            mode,
            ports: self.graph.ports(),
            elements,
            options: options.clone(),
        })
    }
}

/// Builds the problem for partition `part` at one sector point.
pub fn build_problem(
    g: &GraphTopology,
    part: &EdgePartition,
    factors: &[CoprimeFactorPair],
    sector: SectorBounds,
    mode: MultiplierMode,
    options: &SolverOptions,
) -> Result<CertificateProblem, CertifyError> {
    CertificationContext::new(g, part, factors)?.problem(sector, mode, options)
}

impl CertificateProblem {
    /// The problem as linear SDPs over `[λ, (Q_p, ε_p)_p, t]` (free mode, one SDP)
    /// or `[Q_p, ε_p, t]` (fixed mode, one SDP per element).
    pub fn linear_sdps(&self) -> Vec<LinearSdp> {
        match self.mode {
            MultiplierMode::Free => vec![self.coupled_sdp()],
            MultiplierMode::Fixed => (0..self.elements.len()).map(|p| self.element_sdp(p)).collect(),
        }
    }

    fn coupled_sdp(&self) -> LinearSdp {
        let o = &self.options;
        let mut next = self.ports;
        let mut bounds: Vec<Bound> = (0..self.ports)
            .map(|var| Bound {
                var,
                lower: Some(o.lambda_floor),
                upper: Some(o.lambda_cap),
            })
            .collect();
        let mut lmis = Vec::with_capacity(self.elements.len());
        let mut eps_vars = Vec::new();
        for e in &self.elements {
            let lmi = &e.lmi;
            let mut f = SymAffine::zeros(lmi.dim());
            for (port, c) in lmi.lambda_ports.iter().zip(&lmi.lambda_coeffs) {
                f.terms.push((*port, c.clone()));
            }
            for c in &lmi.q_coeffs {
                f.terms.push((next, c.clone()));
                next += 1;
            }
            f.terms.push((next, lmi.epsilon_coeff.clone()));
            eps_vars.push(next);
            next += 1;
            lmis.push(f);
        }
        let t = next;
        for (f, e) in lmis.iter_mut().zip(&self.elements) {
            f.terms.push((t, DMatrix::identity(e.lmi.dim(), e.lmi.dim())));
        }
        for var in eps_vars {
            bounds.push(Bound {
                var,
                lower: Some(o.epsilon_floor),
                upper: None,
            });
        }
        bounds.push(Bound {
            var: t,
            lower: None,
            upper: Some(o.t_cap),
        });
        let mut objective = vec![0.0; t + 1];
        objective[t] = -1.0;
        LinearSdp {
            num_vars: t + 1,
            objective,
            lmis,
            bounds,
        }
    }

    fn element_sdp(&self, p: usize) -> LinearSdp {
        let o = &self.options;
        let lmi = &self.elements[p].lmi;
        let mut f = SymAffine::zeros(lmi.dim());
        for c in &lmi.lambda_coeffs {
            f.constant += c * o.fixed_lambda;
        }
        for (j, c) in lmi.q_coeffs.iter().enumerate() {
            f.terms.push((j, c.clone()));
        }
        let eps = lmi.q_coeffs.len();
        let t = eps + 1;
        f.terms.push((eps, lmi.epsilon_coeff.clone()));
        f.terms.push((t, DMatrix::identity(lmi.dim(), lmi.dim())));
        let mut objective = vec![0.0; t + 1];
        objective[t] = -1.0;
        LinearSdp {
            num_vars: t + 1,
            objective,
            lmis: vec![f],
            bounds: vec![
                Bound {
                    var: eps,
                    lower: Some(o.epsilon_floor),
                    upper: None,
                },
                Bound {
                    var: t,
                    lower: None,
                    upper: Some(o.t_cap),
                },
            ],
        }
    }
}

fn status_label(status: &SdpStatus) -> String {
    match status {
        SdpStatus::Optimal => "optimal".into(),
        SdpStatus::Inaccurate => "inaccurate".into(),
        SdpStatus::Infeasible => "infeasible".into(),
        SdpStatus::Unbounded => "unbounded".into(),
        SdpStatus::Failed(s) => format!("failed: {s}"),
    }
}

/// Outcome of one linear SDP in margin form.
struct MarginSolution {
    x: Vec<f64>,
    margin: f64,
    status: SdpStatus,
    iterations: u32,
}

fn solve_margin(
    backend: &dyn SdpBackend,
    sdp: &LinearSdp,
    options: &SolverOptions,
) -> Result<MarginSolution, CertifyError> {
    let sol = backend.solve(sdp, options)?;
    match &sol.status {
        SdpStatus::Optimal | SdpStatus::Inaccurate => Ok(MarginSolution {
            margin: sol.x[sdp.num_vars - 1],
            x: sol.x,
            status: sol.status,
            iterations: sol.iterations,
        }),
        SdpStatus::Infeasible => Ok(MarginSolution {
            x: vec![f64::NAN; sdp.num_vars],
            margin: f64::NEG_INFINITY,
            status: sol.status,
            iterations: sol.iterations,
        }),
        other => Err(CertifyError::SolverFailure(status_label(other))),
    }
}

/// Solves `problem` with `backend` and re-verifies the returned variables.
pub fn solve(
    problem: &CertificateProblem,
    backend: &dyn SdpBackend,
) -> Result<CertificateResult, CertifyError> {
    let start = Instant::now();
    let o = &problem.options;
    let sdps = problem.linear_sdps();
    let solutions: Vec<MarginSolution> = if problem.mode == MultiplierMode::Fixed && o.parallel {
        sdps.par_iter()
            .map(|s| solve_margin(backend, s, o))
            .collect::<Result<_, _>>()?
    } else {
        sdps.iter()
            .map(|s| solve_margin(backend, s, o))
            .collect::<Result<_, _>>()?
    };

    let c = problem.elements.len();
    let mut q = Vec::with_capacity(c);
    let mut epsilon = Vec::with_capacity(c);
    let (lambda, block_margins) = match problem.mode {
        MultiplierMode::Free => {
            let x = &solutions[0].x;
            let mut next = problem.ports;
            for e in &problem.elements {
                let nq = e.lmi.q_coeffs.len();
                q.push(x[next..next + nq].to_vec());
                epsilon.push(x[next + nq]);
                next += nq + 1;
            }
            (x[..problem.ports].to_vec(), vec![solutions[0].margin; c])
        }
        MultiplierMode::Fixed => {
            for (e, s) in problem.elements.iter().zip(&solutions) {
                let nq = e.lmi.q_coeffs.len();
                q.push(s.x[..nq].to_vec());
                epsilon.push(s.x[nq]);
            }
            (
                vec![o.fixed_lambda; problem.ports],
                solutions.iter().map(|s| s.margin).collect(),
            )
        }
    };
    // interior-point iterates may violate the box bounds by the feasibility
    // tolerance; project before the independent re-check
    let lambda: Vec<f64> = match problem.mode {
        MultiplierMode::Free => lambda
            .iter()
            .map(|l| l.clamp(o.lambda_floor, o.lambda_cap))
            .collect(),
        MultiplierMode::Fixed => lambda,
    };
    epsilon.iter_mut().for_each(|e| *e = e.max(o.epsilon_floor));
    let margin = block_margins.iter().copied().fold(f64::INFINITY, f64::min);
    let worst = solutions
        .iter()
        .find(|s| s.status != SdpStatus::Optimal)
        .unwrap_or(&solutions[0]);

    let mut result = CertificateResult {
        mode: problem.mode,
        feasible: false,
        margin,
        lambda,
        epsilon,
        q,
        block_margins,
        block_max_eigenvalues: Vec::new(),
        status: status_label(&worst.status),
        numerical_warning: solutions.iter().any(|s| s.status == SdpStatus::Inaccurate),
        iterations: solutions.iter().map(|s| s.iterations).sum(),
        seconds: 0.0,
    };
    if margin.is_finite() {
        let report = verify_solution(&result, problem);
        result.block_max_eigenvalues = report.max_eigenvalues.clone();
        result.feasible = margin >= o.t_accept && report.passed();
    }
    result.seconds = start.elapsed().as_secs_f64();
    Ok(result)
}

/// Re-evaluates every block from `Q`, `λ`, `ε` and the element formulas and
/// flags blocks whose largest eigenvalue exceeds `-t*/2`.
pub fn verify_solution(result: &CertificateResult, problem: &CertificateProblem) -> VerificationReport {
    let threshold = -result.margin / 2.0;
    let mut max_eigenvalues = Vec::with_capacity(problem.elements.len());
    let mut flagged = Vec::new();
    let mut positive = result.lambda.iter().all(|&l| l > 0.0);
    for (p, e) in problem.elements.iter().enumerate() {
        let local: Vec<f64> = e.lmi.lambda_ports.iter().map(|&r| result.lambda[r]).collect();
        let eps = result.epsilon[p];
        positive &= eps > 0.0;
        let m = kyp_matrix(&e.stacked, &e.blocks, &e.lmi.q_matrix(&result.q[p]), &local, eps);
        let top = m.symmetric_eigen().eigenvalues.max();
        if !(top <= threshold) {
            flagged.push(p);
        }
        max_eigenvalues.push(top);
    }
    VerificationReport {
        max_eigenvalues,
        threshold,
        flagged,
        multipliers_positive: positive,
    }
}

/// `[[AᵀQ + QA, QB], [BᵀQ, 0]] + [C D]ᵀ Φ̂_full [C D]`, assembled directly.
pub fn kyp_matrix(
    stacked: &StateSpace,
    blocks: &AssembledBlocks,
    q: &DMatrix<f64>,
    lambda: &[f64],
    epsilon: f64,
) -> DMatrix<f64> {
    let (nx, nu) = (stacked.nx(), stacked.nu());
    let mut m = DMatrix::zeros(nx + nu, nx + nu);
    let qb = q * &stacked.b;
    m.view_mut((0, 0), (nx, nx))
        .copy_from(&(stacked.a.transpose() * q + q * &stacked.a));
    m.view_mut((0, nx), (nx, nu)).copy_from(&qb);
    m.view_mut((nx, 0), (nu, nx)).copy_from(&qb.transpose());
    let mut cd = DMatrix::zeros(stacked.ny(), nx + nu);
    cd.view_mut((0, 0), (stacked.ny(), nx)).copy_from(&stacked.c);
    cd.view_mut((0, nx), (stacked.ny(), nu)).copy_from(&stacked.d);
    let phi = blocks
        .phi_full(lambda, epsilon)
        .expect("local multiplier length");
    m += cd.transpose() * phi * cd;
    (&m + m.transpose()) * 0.5
}

/// Largest eigenvalue of `G(jω)* Φ̂_full G(jω)` over `freqs`, with `G = [N̂; D̂; I]`.
pub fn fdi_residual(
    stacked: &StateSpace,
    blocks: &AssembledBlocks,
    lambda: &[f64],
    epsilon: f64,
    freqs: &[f64],
) -> f64 {
    let phi = to_complex(&blocks.phi_full(lambda, epsilon).expect("local multiplier length"));
    freqs
        .iter()
        .filter_map(|&w| stacked.freq_response(w))
        .map(|gw| {
            let h = gw.adjoint() * &phi * &gw;
            let h = (&h + h.adjoint()) * nalgebra::Complex::new(0.5, 0.0);
            h.symmetric_eigen().eigenvalues.max()
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Factorizes each agent with the default design.
pub fn factorize_agents(agents: &[AgentModel]) -> Result<Vec<CoprimeFactorPair>, CertifyError> {
    agents
        .iter()
        .map(|a| coprime_factorize(a, &FeedbackDesign::default()).map_err(CertifyError::from))
        .collect()
}

/// Single-element certificate over the whole edge set, after checking that the
/// network with ideal links is stable.
pub fn certify_monolithic(
    g: &GraphTopology,
    agents: &[AgentModel],
    sector: SectorBounds,
    mode: MultiplierMode,
    backend: &dyn SdpBackend,
    options: &SolverOptions,
) -> Result<CertificateResult, CertifyError> {
    let nominal = check_nominal_stability(g, agents)?;
    if !nominal.stable {
        return Err(CertifyError::NominalUnstable {
            abscissa: nominal.abscissa,
        });
    }
    let factors = factorize_agents(agents)?;
    let problem = build_problem(g, &EdgePartition::whole(g), &factors, sector, mode, options)?;
    solve(&problem, backend)
}
