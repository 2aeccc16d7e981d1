use nalgebra::DMatrix;

use super::CertifyError;
use crate::lti::StateSpace;
use crate::multiplier::AssembledBlocks;

/// Problem dimensions of one element's KYP LMI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct ProblemSize {
    pub element: usize,
    /// `n_p = |U_p|`
    pub n_p: usize,
    /// `n̂_p`, state dimension of the stacked factors
    pub n_hat: usize,
    /// `m̂_p`, local port count
    pub m_hat: usize,
    /// `m̃_p = n̂_p + m̂_p`, LMI dimension
    pub m_tilde: usize,
    /// `ñ_p = (n̂_p² + n̂_p)/2 + m̂_p + 1`, variable count with free multipliers
    pub n_tilde: usize,
    /// `n̆_p = ñ_p - m̂_p`, variable count with fixed multipliers
    pub n_breve: usize,
}

impl ProblemSize {
    pub fn new(element: usize, n_p: usize, n_hat: usize, m_hat: usize) -> Self {
        let n_tilde = (n_hat * n_hat + n_hat) / 2 + m_hat + 1;
        Self {
            element,
            n_p,
            n_hat,
            m_hat,
            m_tilde: n_hat + m_hat,
            n_tilde,
            n_breve: n_tilde - m_hat,
        }
    }
}

/// KYP LMI of one partition element, linear in `(Q_p, λ, ε_p)`:
///
/// `M = [[AᵀQ + QA, QB], [BᵀQ, 0]] + [C D]ᵀ Φ̂_full(λ, ε) [C D]`.
#[derive(Debug, Clone)]
pub struct LmiBlock {
    pub size: ProblemSize,
    /// Global port of each local multiplier variable.
    pub lambda_ports: Vec<usize>,
    pub lambda_coeffs: Vec<DMatrix<f64>>,
    /// One coefficient per entry `(a, b)`, `a ≤ b`, of `Q`, column by column.
    pub q_coeffs: Vec<DMatrix<f64>>,
    pub epsilon_coeff: DMatrix<f64>,
}

impl LmiBlock {
    pub fn dim(&self) -> usize {
        self.size.m_tilde
    }

    /// `M(Q, λ, ε)` with `q` the upper-triangle entries of `Q` and `lambda` local.
    pub fn evaluate(&self, q: &[f64], lambda: &[f64], epsilon: f64) -> DMatrix<f64> {
        let mut out = &self.epsilon_coeff * epsilon;
        for (c, v) in self.lambda_coeffs.iter().zip(lambda) {
            out += c * *v;
        }
        for (c, v) in self.q_coeffs.iter().zip(q) {
            out += c * *v;
        }
        out
    }

    /// Symmetric `Q` from its upper-triangle entries.
    pub fn q_matrix(&self, q: &[f64]) -> DMatrix<f64> {
        let n = self.size.n_hat;
        let mut out = DMatrix::zeros(n, n);
        let mut idx = 0;
        for b in 0..n {
            for a in 0..=b {
                out[(a, b)] = q[idx];
                out[(b, a)] = q[idx];
                idx += 1;
            }
        }
        out
    }
}

/// Builds the KYP LMI from the stacked realization `[N̂_p; D̂_p; I]` and the
/// element's multiplier blocks.
pub fn build_kyp_lmi(stacked: &StateSpace, blocks: &AssembledBlocks) -> Result<LmiBlock, CertifyError> {
    let (n_p, m_hat) = (blocks.n_p(), blocks.m_hat());
    let n_hat = stacked.nx();
    if stacked.nu() != m_hat || stacked.ny() != n_p + 2 * m_hat {
        return Err(CertifyError::Dimension(format!(
            "stacked system is {}x{} but the element needs {}x{}",
            stacked.ny(),
            stacked.nu(),
            n_p + 2 * m_hat,
            m_hat
        )));
    }
    let dim = n_hat + m_hat;
    let mut cd = DMatrix::zeros(stacked.ny(), dim);
    cd.view_mut((0, 0), (stacked.ny(), n_hat)).copy_from(&stacked.c);
    cd.view_mut((0, n_hat), (stacked.ny(), m_hat)).copy_from(&stacked.d);
    let congruence = |phi: &DMatrix<f64>| {
        let out = cd.transpose() * phi * &cd;
        (&out + out.transpose()) * 0.5
    };

    let coeffs = blocks.phi_full_coefficients();
    let lambda_coeffs = coeffs.lambda.iter().map(congruence).collect();
    let epsilon_coeff = congruence(&coeffs.epsilon);

    let mut q_coeffs = Vec::with_capacity(n_hat * (n_hat + 1) / 2);
    for b in 0..n_hat {
        for a in 0..=b {
            let mut e = DMatrix::zeros(n_hat, n_hat);
            e[(a, b)] = 1.0;
            e[(b, a)] = 1.0;
            let mut m = DMatrix::zeros(dim, dim);
            let top = stacked.a.transpose() * &e + &e * &stacked.a;
            let eb = &e * &stacked.b;
            m.view_mut((0, 0), (n_hat, n_hat)).copy_from(&top);
            m.view_mut((0, n_hat), (n_hat, m_hat)).copy_from(&eb);
            m.view_mut((n_hat, 0), (m_hat, n_hat)).copy_from(&eb.transpose());
            q_coeffs.push(m);
        }
    }

    Ok(LmiBlock {
        size: ProblemSize::new(blocks.localized.element, n_p, n_hat, m_hat),
        lambda_ports: blocks.lambda_ports().to_vec(),
        lambda_coeffs,
        q_coeffs,
        epsilon_coeff,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{EdgePartition, GraphTopology};
    use crate::lti::{stacked_realization, AgentModel, CoprimeFactorPair, FeedbackDesign, TransferFunction};
    use crate::multiplier::SectorBounds;

    fn factors(g: &GraphTopology, tfs: &[TransferFunction]) -> Vec<CoprimeFactorPair> {
        tfs.iter()
            .enumerate()
            .map(|(i, tf)| {
                let agent = AgentModel::from_transfer_function(tf, g.degree(i)).unwrap();
                crate::lti::coprime_factorize(&agent, &FeedbackDesign::Lqr).unwrap()
            })
            .collect()
    }

    #[test]
    fn sizes_follow_closed_forms() {
        assert_eq!(ProblemSize::new(0, 12, 18, 22).n_tilde, 194);
        assert_eq!(ProblemSize::new(0, 12, 18, 22).m_tilde, 40);
        let s = ProblemSize::new(0, 2, 2, 2);
        assert_eq!((s.m_tilde, s.n_tilde, s.n_breve), (4, 6, 4));
    }

    #[test]
    fn static_factors_give_stateless_lmi() {
        let g = GraphTopology::path(2).unwrap();
        let tfs = [TransferFunction::new(vec![0.5], vec![1.0]), TransferFunction::new(vec![0.25], vec![1.0])];
        let f = factors(&g, &tfs);
        let part = EdgePartition::whole(&g);
        let stacked = stacked_realization(&g, &part, 0, &f).unwrap();
        let blocks = AssembledBlocks::new(&g, &part, 0, SectorBounds::new(0.5, -0.5).unwrap()).unwrap();
        let lmi = build_kyp_lmi(&stacked, &blocks).unwrap();
        assert_eq!(lmi.dim(), 2);
        assert!(lmi.q_coeffs.is_empty());
        let lambda = [1.0, 2.0];
        let expect = stacked.d.transpose() * blocks.phi_full(&lambda, 0.1).unwrap() * &stacked.d;
        assert!((lmi.evaluate(&[], &lambda, 0.1) - expect).norm() < 1e-13);
    }

    #[test]
    fn q_coefficients_reproduce_lyapunov_terms() {
        let g = GraphTopology::path(2).unwrap();
        let tfs = [
            TransferFunction::new(vec![-1.0], vec![1.0, 1.0, 2.0]),
            TransferFunction::new(vec![5.0], vec![1.0, 10.0]),
        ];
        let f = factors(&g, &tfs);
        let part = EdgePartition::whole(&g);
        let stacked = stacked_realization(&g, &part, 0, &f).unwrap();
        let blocks = AssembledBlocks::new(&g, &part, 0, SectorBounds::new(0.3, -0.2).unwrap()).unwrap();
        let lmi = build_kyp_lmi(&stacked, &blocks).unwrap();
        assert_eq!(lmi.size.n_tilde, 6 + 2 + 1);
        let q = [1.0, 0.2, -0.5, 0.3, 0.1, 2.0];
        let qm = lmi.q_matrix(&q);
        let got = lmi.evaluate(&q, &[0.0, 0.0], 0.0);
        let top = stacked.a.transpose() * &qm + &qm * &stacked.a;
        assert!((got.view((0, 0), (3, 3)) - top).norm() < 1e-13);
        assert!((got.view((0, 3), (3, 2)) - &qm * &stacked.b).norm() < 1e-13);
        assert!(got.view((3, 3), (2, 2)).norm() < 1e-15);
    }
}
