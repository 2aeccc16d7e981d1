//! Independent oracles: Laplacian and weight identities, equivalence of the
//! localized and embedded element inequalities, the aggregation identities
//! behind the partitioned certificate, and a sampled static-gain falsifier.
//!
//! The oracles rebuild every network-wide quantity from the graph matrices and
//! partition weights directly; they share only the graph and factorization
//! code with the certificate pipeline.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_rational::Rational64;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::certify::factorize_agents;
use crate::graph::{EdgePartition, GraphTopology, LocalizedMatrices, PartitionError};
use crate::lti::{
    closed_loop_matrix, coprime_factorize, spectral_abscissa, stacked_realization, to_complex,
    AgentModel, Complex64, CoprimeFactorPair, FeedbackDesign, LtiError, TransferFunction,
};
use crate::multiplier::{psi_blocks, AssembledBlocks, PsiBlocks, SectorBounds};
use crate::sweep::{nominal_gate, read_csv, Model, SweepError, SweepPoint, Verdict};

/// Relative tolerance of the floating-point identities.
pub const IDENTITY_TOLERANCE: f64 = 1e-12;
/// Relative tolerance of the embedding and aggregation checks.
pub const EMBEDDING_TOLERANCE: f64 = 1e-10;
/// Tolerance of the floating-point partition-of-unity sums.
pub const WEIGHT_TOLERANCE: f64 = 1e-14;
/// Deviation the dense negative control must exceed.
pub const NEGATIVE_CONTROL_FLOOR: f64 = 1e-6;

type CMatrix = DMatrix<Complex64>;

fn rel_dev(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / (1.0 + b.norm())
}

fn crel_dev(a: &CMatrix, b: &CMatrix) -> f64 {
    (a - b).norm() / (1.0 + b.norm())
}

fn random_matrix(rng: &mut impl Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
}

/// Random `⊕_i Φ_i` with `Φ_i` of size `m_i`, not symmetric.
fn random_block_diagonal(rng: &mut impl Rng, g: &GraphTopology) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(g.ports(), g.ports());
    for i in 0..g.n() {
        let r = g.port_range(i);
        let blk = random_matrix(rng, r.len(), r.len());
        out.view_mut((r.start, r.start), (r.len(), r.len())).copy_from(&blk);
    }
    out
}

/// Maximum deviations of the graph and partition identities.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct IdentityReport {
    /// `P = Pᵀ = P⁻¹ = I - L`, exact.
    pub routing_exact: bool,
    /// `L_k L_l = 2 δ_kl L_k`, exact.
    pub edge_products_exact: bool,
    /// `‖L_k Φ L_l‖` for non-adjacent `k ≠ l` and block-diagonal `Φ`.
    pub non_adjacent_max: f64,
    /// Relative error of the `L Φ L` expansion.
    pub expansion_max: f64,
    /// Same expansion with a dense `Φ`; `None` when every edge pair is adjacent.
    pub negative_control: Option<f64>,
    /// `B̂_kᵀ B̂_l = 2 δ_kl` and `L̂_k L̂_l = 2 δ_kl L̂_k`, exact.
    pub local_products_exact: bool,
    /// Rational partitions of unity of `ω`, `η`, `θ`.
    pub weights_exact: bool,
    /// Same sums in floating point.
    pub weights_max: f64,
    /// `Ω L_k Ωᵀ = L̂_k ⊕ 0`, exact.
    pub omega_exact: bool,
    pub trials: usize,
}

impl IdentityReport {
    pub fn passed(&self) -> bool {
        self.routing_exact
            && self.edge_products_exact
            && self.non_adjacent_max <= IDENTITY_TOLERANCE
            && self.expansion_max <= IDENTITY_TOLERANCE
            && self.negative_control.is_none_or(|d| d > NEGATIVE_CONTROL_FLOOR)
            && self.local_products_exact
            && self.weights_exact
            && self.weights_max <= WEIGHT_TOLERANCE
            && self.omega_exact
    }

    fn merge(&mut self, other: &Self) {
        self.routing_exact &= other.routing_exact;
        self.edge_products_exact &= other.edge_products_exact;
        self.non_adjacent_max = self.non_adjacent_max.max(other.non_adjacent_max);
        self.expansion_max = self.expansion_max.max(other.expansion_max);
        self.negative_control = match (self.negative_control, other.negative_control) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        self.local_products_exact &= other.local_products_exact;
        self.weights_exact &= other.weights_exact;
        self.weights_max = self.weights_max.max(other.weights_max);
        self.omega_exact &= other.omega_exact;
        self.trials += other.trials;
    }
}

/// Runs every graph and partition identity over `trials` random block-diagonal `Φ`.
pub fn lemma_identity_suite(
    g: &GraphTopology,
    part: &EdgePartition,
    trials: usize,
    rng: &mut impl Rng,
) -> IdentityReport {
    let s = g.subsystem_matrices();
    let ports = g.ports();
    let eye = DMatrix::<f64>::identity(ports, ports);
    let routing_exact =
        s.p == s.p.transpose() && &s.p * &s.p == eye && s.p == &eye - &s.l;

    let lk: Vec<DMatrix<f64>> = (0..g.m()).map(|k| s.edge_laplacian(k)).collect();
    let adjacent: Vec<Vec<usize>> = (0..g.m()).map(|k| g.adjacent_edges(k)).collect();
    let mut edge_products_exact = true;
    for k in 0..g.m() {
        for l in 0..g.m() {
            let expect = if k == l { &lk[k] * 2.0 } else { DMatrix::zeros(ports, ports) };
            edge_products_exact &= &lk[k] * &lk[l] == expect;
        }
    }

    let expansion = |phi: &DMatrix<f64>| {
        let lhs = &s.l * phi * &s.l;
        let mut rhs = DMatrix::zeros(ports, ports);
        for k in 0..g.m() {
            rhs += &lk[k] * phi * &lk[k];
            for &l in &adjacent[k] {
                rhs += &lk[k] * phi * &lk[l];
            }
        }
        rel_dev(&rhs, &lhs)
    };
    let far_pairs: Vec<(usize, usize)> = (0..g.m())
        .flat_map(|k| (0..g.m()).map(move |l| (k, l)))
        .filter(|&(k, l)| k != l && !adjacent[k].contains(&l))
        .collect();

    let mut non_adjacent_max: f64 = 0.0;
    let mut expansion_max: f64 = 0.0;
    for _ in 0..trials {
        let phi = random_block_diagonal(rng, g);
        for &(k, l) in &far_pairs {
            non_adjacent_max = non_adjacent_max.max((&lk[k] * &phi * &lk[l]).norm());
        }
        expansion_max = expansion_max.max(expansion(&phi));
    }
    let negative_control = (!far_pairs.is_empty()).then(|| {
        let dense = random_matrix(rng, ports, ports);
        expansion(&dense)
    });

    let mut local_products_exact = true;
    let mut omega_exact = true;
    for p in 0..part.len() {
        let loc = LocalizedMatrices::new(g, part, p).expect("element in range");
        let m_hat = loc.m_hat();
        for (a, ba) in loc.b_hat.iter().enumerate() {
            for (b, bb) in loc.b_hat.iter().enumerate() {
                let want = if a == b { 2.0 } else { 0.0 };
                local_products_exact &= ba.dot(bb) == want;
                let expect = if a == b { &loc.l_hat[a] * 2.0 } else { DMatrix::zeros(m_hat, m_hat) };
                local_products_exact &= &loc.l_hat[a] * &loc.l_hat[b] == expect;
            }
            let k = loc.edges[a];
            let conj = &loc.omega * &lk[k] * loc.omega.transpose();
            let mut expect = DMatrix::zeros(ports, ports);
            expect.view_mut((0, 0), (m_hat, m_hat)).copy_from(&loc.l_hat[a]);
            omega_exact &= conj == expect;
        }
    }

    let (weights_exact, weights_max) = weight_sums(g, part);

    IdentityReport {
        routing_exact,
        edge_products_exact,
        non_adjacent_max,
        expansion_max,
        negative_control,
        local_products_exact,
        weights_exact,
        weights_max,
        omega_exact,
        trials,
    }
}

/// Partition-of-unity sums in rational and floating-point arithmetic.
fn weight_sums(g: &GraphTopology, part: &EdgePartition) -> (bool, f64) {
    let mut exact = true;
    let mut worst: f64 = 0.0;
    let mut check = |terms: Vec<Rational64>| {
        let sum = terms.iter().fold(Rational64::zero(), |acc, w| acc + w);
        exact &= sum == Rational64::one();
        let fsum: f64 = terms.iter().map(|w| *w.numer() as f64 / *w.denom() as f64).sum();
        worst = worst.max((fsum - 1.0).abs());
    };
    for i in 0..g.n() {
        check(part.elements_of_vertex(i).iter().map(|_| part.omega(i)).collect());
        check(part.elements_of_vertex(i).iter().map(|_| part.xi(i)).collect());
    }
    for k in 0..g.m() {
        check(part.elements_of_edge(k).iter().map(|_| part.eta(k)).collect());
        check(part.elements_of_edge(k).iter().map(|_| part.zeta(k)).collect());
        for &l in part.adjacent(k) {
            check(part.shared(k, l).iter().map(|_| part.theta(k, l)).collect());
        }
    }
    (exact, worst)
}

/// Deviations of one element's embedding check.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EmbeddingReport {
    pub element: usize,
    /// `Π̃` against `⊕ ξ_i Π_i`.
    pub scaled_multiplier: f64,
    /// KYP stacked form `G* Φ̂_full G` against the localized formula `Ξ̂_p`.
    pub stacked_form: f64,
    /// `Ω Ξ_p Ωᵀ` against `Ξ̂_p ⊕ 0`.
    pub conjugation: f64,
    pub frequencies: usize,
}

impl EmbeddingReport {
    pub fn max(&self) -> f64 {
        self.scaled_multiplier.max(self.stacked_form).max(self.conjugation)
    }
}

fn diag_of_agent(g: &GraphTopology, i: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(g.ports(), g.ports());
    for r in g.port_range(i) {
        out[(r, r)] = 1.0;
    }
    out
}

fn restrict(m: &CMatrix, rows: &[usize]) -> CMatrix {
    CMatrix::from_fn(rows.len(), rows.len(), |a, b| m[(rows[a], rows[b])])
}

fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// Localized `Ξ̂_p` from restricted network blocks.
fn xi_hat_formula(
    part: &EdgePartition,
    loc: &LocalizedMatrices,
    g: &GraphTopology,
    psi: &PsiBlocks,
    d: &CMatrix,
    epsilon: f64,
) -> CMatrix {
    let rows = &loc.rows;
    let m_hat = rows.len();
    let (psi1, psi2, psi3, d_hat) =
        (restrict(&psi.psi1, rows), restrict(&psi.psi2, rows), restrict(&psi.psi3, rows), restrict(d, rows));
    let mut weight = DVector::zeros(m_hat);
    let mut eps = DVector::zeros(m_hat);
    for (a, &r) in rows.iter().enumerate() {
        let i = g.port_owner(r);
        weight[a] = to_f(part.xi(i));
        eps[a] = epsilon * to_f(part.omega(i));
    }
    let mut out = to_complex(&DMatrix::from_diagonal(&weight)) * psi1 + to_complex(&DMatrix::from_diagonal(&eps));
    let mut h = DMatrix::zeros(m_hat, m_hat);
    let mut z = CMatrix::zeros(m_hat, m_hat);
    for (a, &k) in loc.edges.iter().enumerate() {
        let la = to_complex(&loc.l_hat[a]);
        h += &loc.l_hat[a] * to_f(part.eta(k));
        z += &la * &psi3 * &la * c(to_f(part.zeta(k)));
        for (b, &l) in loc.edges.iter().enumerate() {
            if part.adjacent(k).contains(&l) {
                z += &la * &psi3 * to_complex(&loc.l_hat[b]) * c(to_f(part.theta(k, l)));
            }
        }
    }
    let y = psi2 * to_complex(&h) * &d_hat;
    out += &y + y.adjoint() + d_hat.adjoint() * z * &d_hat;
    out
}

/// Network-wide `Ξ_p`, built from the full Laplacian terms `L_k`.
fn xi_global(
    g: &GraphTopology,
    part: &EdgePartition,
    p: usize,
    psi: &PsiBlocks,
    d: &CMatrix,
    epsilon: f64,
) -> CMatrix {
    let s = g.subsystem_matrices();
    let ports = g.ports();
    let mut out = CMatrix::zeros(ports, ports);
    for &i in part.vertices(p) {
        let sel = to_complex(&diag_of_agent(g, i));
        out += &sel * &psi.psi1 * c(to_f(part.xi(i))) + sel * c(epsilon * to_f(part.omega(i)));
    }
    let edges = part.edges(p);
    let mut h = DMatrix::zeros(ports, ports);
    let mut z = CMatrix::zeros(ports, ports);
    for &k in edges {
        let lk = to_complex(&s.edge_laplacian(k));
        h += s.edge_laplacian(k) * to_f(part.eta(k));
        z += &lk * &psi.psi3 * &lk * c(to_f(part.zeta(k)));
        for &l in edges {
            if part.adjacent(k).contains(&l) {
                z += &lk * &psi.psi3 * to_complex(&s.edge_laplacian(l)) * c(to_f(part.theta(k, l)));
            }
        }
    }
    let y = &psi.psi2 * to_complex(&h) * d;
    out += &y + y.adjoint() + d.adjoint() * z * d;
    out
}

fn to_f(r: Rational64) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Compares the KYP stacked form, the localized formula and the embedded
/// network form of element `p` at each frequency.
#[allow(clippy::too_many_arguments)]
pub fn embedding_equivalence(
    g: &GraphTopology,
    part: &EdgePartition,
    p: usize,
    sector: SectorBounds,
    factors: &[CoprimeFactorPair],
    lambda: &[f64],
    epsilon: f64,
    freqs: &[f64],
) -> Result<EmbeddingReport, LtiError> {
    let blocks = AssembledBlocks::new(g, part, p, sector).expect("element in range");
    let loc = &blocks.localized;
    let local: Vec<f64> = loc.rows.iter().map(|&r| lambda[r]).collect();

    // ⊕ ξ_i Π_i, rebuilt agent by agent from the scalar sector multiplier
    let n = blocks.n_p();
    let mut expect_tilde = DMatrix::zeros(n + blocks.m_hat(), n + blocks.m_hat());
    let mut r = 0;
    for (a, &mi) in blocks.port_counts.iter().enumerate() {
        let blk = crate::multiplier::sector_multiplier(&sector, &local[r..r + mi]);
        let w = blocks.xi[a];
        expect_tilde[(a, a)] = w * blk.pi1;
        for q in 0..mi {
            expect_tilde[(a, n + r + q)] = w * blk.pi2[(0, q)];
            expect_tilde[(n + r + q, a)] = w * blk.pi2[(0, q)];
            for t in 0..mi {
                expect_tilde[(n + r + q, n + r + t)] = w * blk.pi3[(q, t)];
            }
        }
        r += mi;
    }
    let scaled_multiplier = rel_dev(&blocks.pi_tilde(&local).expect("local length"), &expect_tilde);

    let stacked = stacked_realization(g, part, p, factors)?;
    let phi = to_complex(&blocks.phi_full(&local, epsilon).expect("local length"));
    let eval = psi_blocks(g, &sector, lambda, factors).map_err(|e| LtiError::DimensionMismatch(e.to_string()))?;
    let ports = g.ports();
    let m_hat = loc.m_hat();
    let omega = to_complex(&loc.omega);

    let mut report = EmbeddingReport {
        element: p,
        scaled_multiplier,
        frequencies: freqs.len(),
        ..Default::default()
    };
    for &w in freqs {
        let Some((n, d)) = eval.responses(w) else { continue };
        let psi = eval.from_responses(&n, &d);
        let formula = xi_hat_formula(part, loc, g, &psi, &d, epsilon);
        if let Some(gw) = stacked.freq_response(w) {
            let kyp = gw.adjoint() * &phi * &gw;
            report.stacked_form = report.stacked_form.max(crel_dev(&kyp, &formula));
        }
        let global = xi_global(g, part, p, &psi, &d, epsilon);
        let conj = &omega * global * omega.adjoint();
        let mut expect = CMatrix::zeros(ports, ports);
        expect.view_mut((0, 0), (m_hat, m_hat)).copy_from(&formula);
        report.conjugation = report.conjugation.max(crel_dev(&conj, &expect));
    }
    Ok(report)
}

/// Deviations of the aggregation identities that combine element inequalities.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AggregationReport {
    /// `Σ_p Ωᵀ(X̂_p ⊕ 0)Ω = Ψ1`
    pub psi1: f64,
    /// `Σ_p Ωᵀ(½ Ŷ_p K̂_p ⊕ 0)Ω = Ψ2 K`
    pub psi2: f64,
    /// `Σ_p Ωᵀ(¼ K̂_p* Ẑ_p K̂_p ⊕ 0)Ω = K* Ψ3 K`
    pub psi3: f64,
    /// `Σ_p Ωᵀ(Ŵ_p ⊕ 0)Ω = I`
    pub weights: f64,
}

impl AggregationReport {
    pub fn max(&self) -> f64 {
        self.psi1.max(self.psi2).max(self.psi3).max(self.weights)
    }
}

/// Checks the aggregation identities at frequency `omega`.
pub fn aggregation_identities(
    g: &GraphTopology,
    part: &EdgePartition,
    sector: SectorBounds,
    factors: &[CoprimeFactorPair],
    lambda: &[f64],
    omega: f64,
) -> Option<AggregationReport> {
    let eval = psi_blocks(g, &sector, lambda, factors).ok()?;
    let (n, d) = eval.responses(omega)?;
    let psi = eval.from_responses(&n, &d);
    let s = g.subsystem_matrices();
    let ports = g.ports();
    let k_net = to_complex(&s.l) * &d;

    let mut sum1 = CMatrix::zeros(ports, ports);
    let mut sum2 = CMatrix::zeros(ports, ports);
    let mut sum3 = CMatrix::zeros(ports, ports);
    let mut sum_w = DMatrix::zeros(ports, ports);
    for p in 0..part.len() {
        let loc = LocalizedMatrices::new(g, part, p)?;
        let rows = &loc.rows;
        let m_hat = rows.len();
        let (psi1, psi2, psi3, d_hat) =
            (restrict(&psi.psi1, rows), restrict(&psi.psi2, rows), restrict(&psi.psi3, rows), restrict(&d, rows));
        let mut xi = DVector::zeros(m_hat);
        let mut w = DVector::zeros(m_hat);
        for (a, &r) in rows.iter().enumerate() {
            let i = g.port_owner(r);
            xi[a] = to_f(part.xi(i));
            w[a] = to_f(part.omega(i));
        }
        let x_hat = to_complex(&DMatrix::from_diagonal(&xi)) * psi1;
        let mut h = DMatrix::zeros(m_hat, m_hat);
        let mut z = CMatrix::zeros(m_hat, m_hat);
        for (a, &k) in loc.edges.iter().enumerate() {
            let la = to_complex(&loc.l_hat[a]);
            h += &loc.l_hat[a] * to_f(part.eta(k));
            z += &la * &psi3 * &la * c(to_f(part.zeta(k)));
            for (b, &l) in loc.edges.iter().enumerate() {
                if part.adjacent(k).contains(&l) {
                    z += &la * &psi3 * to_complex(&loc.l_hat[b]) * c(to_f(part.theta(k, l)));
                }
            }
        }
        let y_hat = psi2 * to_complex(&h);
        let k_hat = to_complex(&loc.l_hat_sum) * &d_hat;
        sum1 += loc.embed(&x_hat, ports);
        sum2 += loc.embed(&(&y_hat * &k_hat * c(0.5)), ports);
        sum3 += loc.embed(&(k_hat.adjoint() * z * &k_hat * c(0.25)), ports);
        sum_w += loc.embed(&DMatrix::from_diagonal(&w), ports);
    }
    Some(AggregationReport {
        psi1: crel_dev(&sum1, &psi.psi1),
        psi2: crel_dev(&sum2, &(&psi.psi2 * &k_net)),
        psi3: crel_dev(&sum3, &(k_net.adjoint() * &psi.psi3 * &k_net)),
        weights: rel_dev(&sum_w, &DMatrix::identity(ports, ports)),
    })
}

/// Connected graph on `n` vertices: a random spanning tree plus extra edges.
pub fn random_connected_graph(rng: &mut impl Rng, n: usize, extra: f64) -> GraphTopology {
    let mut edges = Vec::new();
    for i in 1..n {
        edges.push((rng.gen_range(0..i), i));
    }
    for i in 0..n {
        for j in i + 1..n {
            if !edges.iter().any(|&(a, b)| (a.min(b), a.max(b)) == (i, j)) && rng.gen_bool(extra) {
                edges.push((i, j));
            }
        }
    }
    GraphTopology::new(n, &edges).expect("spanning tree keeps the graph connected")
}

/// Random connected element sets, repaired with `E_i ∪ E_j` sets until admissible.
pub fn random_admissible_partition(rng: &mut impl Rng, g: &GraphTopology) -> EdgePartition {
    let m = g.m();
    let count = rng.gen_range(1..=m.clamp(1, 4));
    let mut sets: Vec<Vec<usize>> = Vec::new();
    for _ in 0..count {
        let mut set = vec![rng.gen_range(0..m)];
        let target = rng.gen_range(1..=m);
        while set.len() < target {
            let frontier: Vec<usize> = set
                .iter()
                .flat_map(|&k| g.adjacent_edges(k))
                .filter(|l| !set.contains(l))
                .collect();
            if frontier.is_empty() {
                break;
            }
            set.push(frontier[rng.gen_range(0..frontier.len())]);
        }
        sets.push(set);
    }
    loop {
        let check = EdgePartition::check(g, &sets);
        let Some(first) = check.violations.first() else { break };
        match first {
            PartitionError::NotCovering(missing) => {
                sets.extend(missing.iter().map(|&k| vec![k]));
            }
            PartitionError::NeighbourhoodUncovered { edge, .. } => {
                let (i, j) = g.edge(*edge);
                let mut set: Vec<usize> = g.incident_edges(i).to_vec();
                set.extend_from_slice(g.incident_edges(j));
                set.sort_unstable();
                set.dedup();
                sets.push(set);
            }
            other => unreachable!("generated sets are connected and in range: {other}"),
        }
    }
    EdgePartition::new(g, &sets).expect("repaired")
}

/// Random agents: stable first- and second-order lags and unstable first-order ones.
pub fn random_agents(rng: &mut impl Rng, g: &GraphTopology) -> Vec<AgentModel> {
    (0..g.n())
        .map(|i| {
            let gain = rng.gen_range(-2.0..2.0);
            let tf = match rng.gen_range(0..3) {
                0 => TransferFunction::new(vec![gain], vec![1.0, rng.gen_range(0.5..5.0)]),
                1 => TransferFunction::new(vec![gain], vec![1.0, rng.gen_range(0.5..3.0), rng.gen_range(1.0..6.0)]),
                _ => TransferFunction::new(vec![gain], vec![1.0, -rng.gen_range(0.1..2.0)]),
            };
            AgentModel::from_transfer_function(&tf, g.degree(i)).expect("proper transfer function")
        })
        .collect()
}

fn factorize(agents: &[AgentModel]) -> Result<Vec<CoprimeFactorPair>, LtiError> {
    agents
        .iter()
        .map(|a| coprime_factorize(a, &FeedbackDesign::default()))
        .collect()
}

fn random_sector(rng: &mut impl Rng) -> SectorBounds {
    let t1 = rng.gen_range(-80.0..=0.0);
    let t2 = rng.gen_range(0.0..80.0);
    SectorBounds::from_angles_deg(t1, t2).expect("angles in range")
}

/// Outcome of one random instance.
#[derive(Debug, Clone, Serialize)]
pub struct RandomInstance {
    pub vertices: usize,
    pub edges: usize,
    pub elements: usize,
    pub embedding_max: f64,
    pub aggregation_max: f64,
}

/// Identity, embedding and aggregation checks on `trials` random instances with
/// at most `max_n` vertices.
pub fn random_instances(
    seed: u64,
    trials: usize,
    max_n: usize,
) -> (IdentityReport, Vec<RandomInstance>) {
    let results: Vec<(IdentityReport, RandomInstance)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            let n = rng.gen_range(2..=max_n);
            let g = random_connected_graph(&mut rng, n, 0.3);
            let part = random_admissible_partition(&mut rng, &g);
            let ids = lemma_identity_suite(&g, &part, 3, &mut rng);
            let agents = random_agents(&mut rng, &g);
            let factors = factorize(&agents).expect("random agents are factorizable");
            let sector = random_sector(&mut rng);
            let lambda: Vec<f64> = (0..g.ports()).map(|_| rng.gen_range(0.2..3.0)).collect();
            let freqs = [rng.gen_range(0.01..100.0)];
            let embedding_max = (0..part.len())
                .map(|p| {
                    embedding_equivalence(&g, &part, p, sector, &factors, &lambda, 0.3, &freqs)
                        .map_or(f64::INFINITY, |r| r.max())
                })
                .fold(0.0, f64::max);
            let aggregation_max = aggregation_identities(&g, &part, sector, &factors, &lambda, freqs[0])
                .map_or(f64::INFINITY, |r| r.max());
            (
                ids,
                RandomInstance {
                    vertices: n,
                    edges: g.m(),
                    elements: part.len(),
                    embedding_max,
                    aggregation_max,
                },
            )
        })
        .collect();
    let mut merged = IdentityReport {
        routing_exact: true,
        edge_products_exact: true,
        local_products_exact: true,
        weights_exact: true,
        omega_exact: true,
        ..Default::default()
    };
    let mut instances = Vec::with_capacity(results.len());
    for (ids, inst) in results {
        merged.merge(&ids);
        instances.push(inst);
    }
    (merged, instances)
}

/// Falsification outcome of one grid point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointFalsification {
    pub partition: String,
    pub mode: String,
    pub theta1: f64,
    pub theta2: f64,
    pub certified: bool,
    pub samples: usize,
    pub unstable: usize,
    /// Samples skipped because the static loop was singular.
    pub ill_posed: usize,
    pub worst_abscissa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FalsificationReport {
    pub points: Vec<PointFalsification>,
    /// Certified points with an unstable in-sector sample.
    pub soundness_violations: usize,
    /// Uncertified evaluated points whose samples were all stable.
    pub conservatism_evidence: usize,
}

/// Per-port link gains `1 + δ`, `δ ∈ [β, α]`: the four corner patterns then uniform draws.
pub fn sample_gains(rng: &mut impl Rng, sector: &SectorBounds, ports: usize, k: usize) -> DVector<f64> {
    let (lo, hi) = (sector.beta, sector.alpha);
    DVector::from_fn(ports, |r, _| {
        let delta = match k {
            0 => lo,
            1 => hi,
            2 => if r % 2 == 0 { lo } else { hi },
            3 => if r % 2 == 0 { hi } else { lo },
            _ if hi > lo => rng.gen_range(lo..=hi),
            _ => lo,
        };
        1.0 + delta
    })
}

/// Samples in-sector static link gains at every evaluated point and checks
/// closed-loop stability.
pub fn falsify(
    model: &Model,
    points: &[SweepPoint],
    samples: usize,
) -> Result<FalsificationReport, SweepError> {
    nominal_gate(model)?;
    let seed = model.seed();
    let evaluated: Vec<(usize, &SweepPoint)> = points
        .iter()
        .enumerate()
        .filter(|(_, p)| matches!(p.verdict, Verdict::Feasible | Verdict::Infeasible))
        .collect();
    let out: Vec<PointFalsification> = evaluated
        .par_iter()
        .map(|&(idx, pt)| {
            let sector = SectorBounds::from_angles_deg(pt.theta1, pt.theta2).expect("evaluated point");
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(idx as u64);
            let total = samples.max(4);
            let (mut unstable, mut ill_posed) = (0, 0);
            let mut worst = f64::NEG_INFINITY;
            for k in 0..total {
                let gains = sample_gains(&mut rng, &sector, model.graph.ports(), k);
                match closed_loop_matrix(&model.graph, &model.agents, &gains) {
                    Ok(a) => {
                        let abscissa = spectral_abscissa(&a);
                        worst = worst.max(abscissa);
                        if !(abscissa < 0.0) {
                            unstable += 1;
                        }
                    }
                    Err(_) => ill_posed += 1,
                }
            }
            PointFalsification {
                partition: pt.partition.clone(),
                mode: pt.mode.as_str().to_string(),
                theta1: pt.theta1,
                theta2: pt.theta2,
                certified: pt.verdict == Verdict::Feasible,
                samples: total,
                unstable,
                ill_posed,
                worst_abscissa: worst,
            }
        })
        .collect();
    let soundness_violations = out.iter().filter(|p| p.certified && p.unstable > 0).count();
    let conservatism_evidence = out
        .iter()
        .filter(|p| !p.certified && p.unstable == 0 && p.ill_posed == 0)
        .count();
    Ok(FalsificationReport {
        points: out,
        soundness_violations,
        conservatism_evidence,
    })
}

/// Full validation report written by `netcert validate`.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub model: String,
    pub passed: bool,
    /// Identities per shipped admissible partition.
    pub partition_identities: Vec<(String, IdentityReport)>,
    pub random_identities: IdentityReport,
    /// Embedding checks per shipped admissible partition and element.
    pub embedding: Vec<(String, EmbeddingReport)>,
    pub aggregation: Vec<(String, AggregationReport)>,
    pub random_instances: Vec<RandomInstance>,
    pub falsification: Option<FalsificationReport>,
}

/// Frequencies at which the embedding checks are evaluated.
pub const CHECK_FREQUENCIES: [f64; 5] = [0.0, 0.1, 1.0, 10.0, 100.0];

/// Runs every oracle on the model; with `sweep_dir`, also falsifies the
/// points of its `sweep.csv`.
pub fn run_validation(
    model: &Model,
    sweep_dir: Option<&Path>,
    samples: usize,
    trials: usize,
) -> Result<ValidationReport, SweepError> {
    let seed = model.seed();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let factors = factorize_agents(&model.agents)?;
    let sector = random_sector(&mut rng);
    let lambda: Vec<f64> = (0..model.graph.ports()).map(|_| rng.gen_range(0.2..3.0)).collect();

    let mut partition_identities = Vec::new();
    let mut embedding = Vec::new();
    let mut aggregation = Vec::new();
    for named in &model.partitions {
        let Ok(part) = &named.partition else { continue };
        partition_identities.push((named.name.clone(), lemma_identity_suite(&model.graph, part, trials.max(1), &mut rng)));
        for p in 0..part.len() {
            let r = embedding_equivalence(&model.graph, part, p, sector, &factors, &lambda, 0.3, &CHECK_FREQUENCIES)
                .map_err(crate::certify::CertifyError::from)?;
            embedding.push((named.name.clone(), r));
        }
        if let Some(r) = aggregation_identities(&model.graph, part, sector, &factors, &lambda, 1.0) {
            aggregation.push((named.name.clone(), r));
        }
    }
    let (random_identities, random_instances) = random_instances(seed, trials, 6);

    let falsification = match sweep_dir {
        Some(dir) => Some(falsify(model, &read_csv(&dir.join("sweep.csv"))?, samples)?),
        None => None,
    };

    let passed = partition_identities.iter().all(|(_, r)| r.passed())
        && random_identities.passed()
        && embedding.iter().all(|(_, r)| r.max() <= EMBEDDING_TOLERANCE)
        && aggregation.iter().all(|(_, r)| r.max() <= EMBEDDING_TOLERANCE)
        && random_instances
            .iter()
            .all(|r| r.embedding_max <= EMBEDDING_TOLERANCE && r.aggregation_max <= EMBEDDING_TOLERANCE)
        && falsification.as_ref().is_none_or(|f| f.soundness_violations == 0);

    Ok(ValidationReport {
        model: model.file.name.clone(),
        passed,
        partition_identities,
        random_identities,
        embedding,
        aggregation,
        random_instances,
        falsification,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identities_on_small_graphs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = GraphTopology::path(4).unwrap();
        let r = lemma_identity_suite(&g, &EdgePartition::neighbourhood(&g), 5, &mut rng);
        assert!(r.passed(), "{r:?}");
        assert!(r.negative_control.unwrap() > NEGATIVE_CONTROL_FLOOR);
        // a triangle has no non-adjacent edge pair, so no control applies
        let tri = GraphTopology::new(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        let r = lemma_identity_suite(&tri, &EdgePartition::whole(&tri), 2, &mut rng);
        assert!(r.passed() && r.negative_control.is_none(), "{r:?}");
    }

    #[test]
    fn whole_partition_embedding_is_identity() {
        let g = GraphTopology::path(3).unwrap();
        let part = EdgePartition::whole(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let agents = random_agents(&mut rng, &g);
        let factors = factorize(&agents).unwrap();
        let loc = LocalizedMatrices::new(&g, &part, 0).unwrap();
        assert_eq!(loc.omega, DMatrix::identity(4, 4));
        let r = embedding_equivalence(
            &g,
            &part,
            0,
            SectorBounds::new(0.5, -0.2).unwrap(),
            &factors,
            &[1.0, 2.0, 0.5, 1.5],
            0.1,
            &CHECK_FREQUENCIES,
        )
        .unwrap();
        assert!(r.max() < 1e-12, "{r:?}");
    }

    #[test]
    fn repaired_partitions_are_admissible() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let n = rng.gen_range(2..=8);
            let g = random_connected_graph(&mut rng, n, 0.3);
            let part = random_admissible_partition(&mut rng, &g);
            assert!(EdgePartition::check(&g, part.sets()).is_admissible());
        }
    }

    #[test]
    fn corner_gains_hit_sector_ends() {
        let s = SectorBounds::new(0.5, -0.25).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert!(sample_gains(&mut rng, &s, 3, 0).iter().all(|&v| v == 0.75));
        assert!(sample_gains(&mut rng, &s, 3, 1).iter().all(|&v| v == 1.5));
        assert_eq!(sample_gains(&mut rng, &s, 2, 2).as_slice(), &[0.75, 1.5]);
        let draw = sample_gains(&mut rng, &s, 50, 7);
        assert!(draw.iter().all(|&v| (0.75..=1.5).contains(&v)));
        let zero = SectorBounds::new(0.0, 0.0).unwrap();
        assert!(sample_gains(&mut rng, &zero, 4, 9).iter().all(|&v| v == 1.0));
    }
}
