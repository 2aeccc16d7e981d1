use nalgebra::{DMatrix, DVector};

use super::{AgentModel, CoprimeFactorPair, LtiError, StateSpace, DEFAULT_STABILITY_MARGIN};
use crate::graph::{EdgePartition, GraphTopology};

/// Reciprocal condition number of `I - K D` below which the loop is rejected.
const ALGEBRAIC_LOOP_RCOND: f64 = 1e-12;

/// Outcome of the ideal-link stability test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NominalCheck {
    pub abscissa: f64,
    pub stable: bool,
}

fn check_agents(g: &GraphTopology, agents: &[AgentModel]) -> Result<(), LtiError> {
    if agents.len() != g.n() {
        return Err(LtiError::AgentCount {
            expected: g.n(),
            got: agents.len(),
        });
    }
    for (i, agent) in agents.iter().enumerate() {
        let sys = &agent.realization;
        if sys.nu() != g.degree(i) || sys.ny() != 1 {
            return Err(LtiError::AgentPorts {
                agent: i,
                expected: g.degree(i),
                inputs: sys.nu(),
                outputs: sys.ny(),
            });
        }
    }
    Ok(())
}

/// State matrix of `[[P, Λ ∘ T ∘ H]]` for static link gains `Λ = diag(link_gains)`.
///
/// `link_gains` is indexed by sub-system port, i.e. entry `s(i) + k` scales the
/// link carrying agent `i`'s output to its `k`-th neighbour.
pub fn closed_loop_matrix(
    g: &GraphTopology,
    agents: &[AgentModel],
    link_gains: &DVector<f64>,
) -> Result<DMatrix<f64>, LtiError> {
    check_agents(g, agents)?;
    let ports = g.ports();
    if link_gains.len() != ports {
        return Err(LtiError::DimensionMismatch(format!(
            "{} link gains for {ports} ports",
            link_gains.len()
        )));
    }
    let models: Vec<&StateSpace> = agents.iter().map(|a| &a.realization).collect();
    let h = StateSpace::direct_sum(&models);
    let s = g.subsystem_matrices();
    let k = &s.p * DMatrix::from_diagonal(link_gains) * &s.t;
    let loop_gain = DMatrix::identity(ports, ports) - &k * &h.d;
    let sv = loop_gain.clone().singular_values();
    let (lo, hi) = (sv.min(), sv.max());
    let rcond = if hi > 0.0 { lo / hi } else { 0.0 };
    if rcond < ALGEBRAIC_LOOP_RCOND {
        return Err(LtiError::AlgebraicLoop { rcond });
    }
    let feedback = loop_gain
        .lu()
        .solve(&(k * &h.c))
        .ok_or(LtiError::AlgebraicLoop { rcond })?;
    Ok(&h.a + &h.b * feedback)
}

/// Stability of the network with ideal links (`Λ = I`).
pub fn check_nominal_stability(
    g: &GraphTopology,
    agents: &[AgentModel],
) -> Result<NominalCheck, LtiError> {
    let a = closed_loop_matrix(g, agents, &DVector::from_element(g.ports(), 1.0))?;
    let abscissa = super::spectral_abscissa(&a);
    Ok(NominalCheck {
        abscissa,
        stable: abscissa < -DEFAULT_STABILITY_MARGIN,
    })
}

/// Shared-state realization of `[N̂_p; D̂_p; I]` for partition element `p`.
///
/// Outputs are ordered as the `n_p` agent outputs, then the `m̂_p` rows of
/// `D̂_p`, then the `m̂_p` identity rows; agents follow the natural order of `U_p`.
pub fn stacked_realization(
    g: &GraphTopology,
    part: &EdgePartition,
    p: usize,
    factors: &[CoprimeFactorPair],
) -> Result<StateSpace, LtiError> {
    if factors.len() != g.n() {
        return Err(LtiError::AgentCount {
            expected: g.n(),
            got: factors.len(),
        });
    }
    if p >= part.len() {
        return Err(LtiError::DimensionMismatch(format!(
            "element {p} of a {}-element partition",
            part.len()
        )));
    }
    let members: Vec<&CoprimeFactorPair> =
        part.vertices(p).iter().map(|&i| &factors[i]).collect();
    for (&i, f) in part.vertices(p).iter().zip(&members) {
        if f.inputs() != g.degree(i) || f.c_n.nrows() != 1 {
            return Err(LtiError::AgentPorts {
                agent: i,
                expected: g.degree(i),
                inputs: f.inputs(),
                outputs: f.c_n.nrows(),
            });
        }
    }
    Ok(stack_factors(&members))
}

/// `[⊕N_i; ⊕D_i; I]` over the given factor pairs, one state copy per agent.
pub fn stack_factors(members: &[&CoprimeFactorPair]) -> StateSpace {
    let nx: usize = members.iter().map(|f| f.state_dim()).sum();
    let nu: usize = members.iter().map(|f| f.inputs()).sum();
    let np = members.len();
    let ny = np + 2 * nu;
    let mut out = StateSpace {
        a: DMatrix::zeros(nx, nx),
        b: DMatrix::zeros(nx, nu),
        c: DMatrix::zeros(ny, nx),
        d: DMatrix::zeros(ny, nu),
    };
    let (mut x0, mut u0) = (0, 0);
    for (agent, f) in members.iter().enumerate() {
        let (x, u) = (f.state_dim(), f.inputs());
        out.a.view_mut((x0, x0), (x, x)).copy_from(&f.a);
        out.b.view_mut((x0, u0), (x, u)).copy_from(&f.b);
        out.c.view_mut((agent, x0), (1, x)).copy_from(&f.c_n);
        out.d.view_mut((agent, u0), (1, u)).copy_from(&f.d_n);
        out.c.view_mut((np + u0, x0), (u, x)).copy_from(&f.c_d);
        out.d.view_mut((np + u0, u0), (u, u)).copy_from(&f.d_d);
        x0 += x;
        u0 += u;
    }
    for r in 0..nu {
        out.d[(np + nu + r, r)] = 1.0;
    }
    out
}
