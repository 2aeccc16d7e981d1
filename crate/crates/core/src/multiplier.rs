//! Sector multipliers for the link uncertainty and the static blocks of the
//! localized KYP form.
//!
//! All blocks are linear in the per-link multiplier scalars `λ` (one per
//! sub-system port) and in `ε_p`; there is no constant term.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::graph::{EdgePartition, GraphTopology, LocalizedMatrices};
use crate::lti::{to_complex, Complex64, CoprimeFactorPair};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MultiplierError {
    #[error("sector bounds must be finite, got alpha={alpha}, beta={beta}")]
    NonFinite { alpha: f64, beta: f64 },
    #[error("sector lower bound {beta} exceeds upper bound {alpha}")]
    Inverted { alpha: f64, beta: f64 },
    #[error("sector angle {0} deg outside (-90, 90)")]
    AngleOutOfRange(f64),
    #[error("expected {expected} multiplier values, got {got}")]
    LambdaLength { expected: usize, got: usize },
    #[error("partition element {0} does not exist")]
    NoSuchElement(usize),
}

/// Sector `[β, α]` containing the gain of every link deviation `Λ - 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SectorBounds {
    pub alpha: f64,
    pub beta: f64,
}

impl SectorBounds {
    pub fn new(alpha: f64, beta: f64) -> Result<Self, MultiplierError> {
        if !alpha.is_finite() || !beta.is_finite() {
            return Err(MultiplierError::NonFinite { alpha, beta });
        }
        if beta > alpha {
            return Err(MultiplierError::Inverted { alpha, beta });
        }
        Ok(Self { alpha, beta })
    }

    /// `(α, β) = (tan θ2, tan θ1)` with angles in degrees.
    pub fn from_angles_deg(theta1: f64, theta2: f64) -> Result<Self, MultiplierError> {
        for th in [theta1, theta2] {
            if !(th > -90.0 && th < 90.0) {
                return Err(MultiplierError::AngleOutOfRange(th));
            }
        }
        Self::new(theta2.to_radians().tan(), theta1.to_radians().tan())
    }

    /// `β ≤ 0 ≤ α`, required for the homotopy `αΔ` to stay in the sector.
    pub fn contains_zero(&self) -> bool {
        self.beta <= 0.0 && 0.0 <= self.alpha
    }
}

/// Blocks of `Π_i` for one agent with `m_i = λ.len()` links.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorMultiplier {
    pub pi1: f64,
    /// `1 x m_i`
    pub pi2: DMatrix<f64>,
    /// `m_i x m_i`, diagonal
    pub pi3: DMatrix<f64>,
}

impl SectorMultiplier {
    /// Full `(1 + m_i) x (1 + m_i)` matrix `[[Π1, Π2], [Π2ᵀ, Π3]]`.
    pub fn matrix(&self) -> DMatrix<f64> {
        let m = self.pi3.nrows();
        let mut out = DMatrix::zeros(m + 1, m + 1);
        out[(0, 0)] = self.pi1;
        out.view_mut((0, 1), (1, m)).copy_from(&self.pi2);
        out.view_mut((1, 0), (m, 1)).copy_from(&self.pi2.transpose());
        out.view_mut((1, 1), (m, m)).copy_from(&self.pi3);
        out
    }
}

/// `Π1 = -2αβ Σλ`, `Π2 = (α+β) λᵀ`, `Π3 = -2 diag(λ)`.
pub fn sector_multiplier(sector: &SectorBounds, lambda: &[f64]) -> SectorMultiplier {
    let (a, b) = (sector.alpha, sector.beta);
    SectorMultiplier {
        pi1: -2.0 * a * b * lambda.iter().sum::<f64>(),
        pi2: DMatrix::from_row_slice(1, lambda.len(), lambda) * (a + b),
        pi3: DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(lambda)) * -2.0,
    }
}

/// Agent-wise direct sums `(Π̂1, Π̂2, Π̂3)` over agents with the given port counts.
fn stacked_multiplier(
    sector: &SectorBounds,
    port_counts: &[usize],
    lambda: &[f64],
) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let n = port_counts.len();
    let m: usize = port_counts.iter().sum();
    let mut pi1 = DMatrix::zeros(n, n);
    let mut pi2 = DMatrix::zeros(n, m);
    let mut pi3 = DMatrix::zeros(m, m);
    let mut r = 0;
    for (i, &mi) in port_counts.iter().enumerate() {
        let blk = sector_multiplier(sector, &lambda[r..r + mi]);
        pi1[(i, i)] = blk.pi1;
        pi2.view_mut((i, r), (1, mi)).copy_from(&blk.pi2);
        pi3.view_mut((r, r), (mi, mi)).copy_from(&blk.pi3);
        r += mi;
    }
    (pi1, pi2, pi3)
}

/// `[Π1, Π2; Π2ᵀ, Π3]` from its blocks.
fn join(pi1: &DMatrix<f64>, pi2: &DMatrix<f64>, pi3: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, m) = pi2.shape();
    let mut out = DMatrix::zeros(n + m, n + m);
    out.view_mut((0, 0), (n, n)).copy_from(pi1);
    out.view_mut((0, n), (n, m)).copy_from(pi2);
    out.view_mut((n, 0), (m, n)).copy_from(&pi2.transpose());
    out.view_mut((n, n), (m, m)).copy_from(pi3);
    out
}

/// Coefficients of `Φ̂_full` with respect to each local `λ` and to `ε_p`.
#[derive(Debug, Clone)]
pub struct PhiCoefficients {
    pub lambda: Vec<DMatrix<f64>>,
    pub epsilon: DMatrix<f64>,
}

/// Static multiplier blocks of one partition element.
#[derive(Debug, Clone)]
pub struct AssembledBlocks {
    pub sector: SectorBounds,
    pub localized: LocalizedMatrices,
    /// `U_p` in natural order.
    pub agents: Vec<usize>,
    /// `m_i` for each agent of `U_p`.
    pub port_counts: Vec<usize>,
    /// `ξ_i` for each agent of `U_p`.
    pub xi: Vec<f64>,
    /// `Ξ̂_p = (⊕ξ_i) ⊕ (⊕ξ_i I_{m_i})`
    pub xi_hat: DMatrix<f64>,
    /// `Ĥ_p = Σ_k η_k L̂_{p,k}`
    pub h_hat: DMatrix<f64>,
    /// `Ŵ_p = ⊕ ω_i I_{m_i}`
    pub w_hat: DMatrix<f64>,
    /// `T̂_p = ⊕ 1_{m_i}`
    pub t_hat: DMatrix<f64>,
    /// `Ŝ_p = [[I, 0], [-T̂, I], [0, -I]]`
    pub s_hat: DMatrix<f64>,
    /// `(a, b, weight)` such that `Ẑ = Σ weight · L̂_a Π̂3 L̂_b`, positions local to the element.
    pub z_terms: Vec<(usize, usize, f64)>,
}

impl AssembledBlocks {
    pub fn new(
        g: &GraphTopology,
        part: &EdgePartition,
        p: usize,
        sector: SectorBounds,
    ) -> Result<Self, MultiplierError> {
        let localized =
            LocalizedMatrices::new(g, part, p).ok_or(MultiplierError::NoSuchElement(p))?;
        let agents = part.vertices(p).to_vec();
        let port_counts: Vec<usize> = agents.iter().map(|&i| g.degree(i)).collect();
        let xi: Vec<f64> = agents.iter().map(|&i| ratio(part.xi(i))).collect();
        let n_p = agents.len();
        let m_hat = localized.m_hat();

        let mut xi_diag = xi.clone();
        let mut w_diag = Vec::with_capacity(m_hat);
        let mut t_hat = DMatrix::zeros(m_hat, n_p);
        let mut r = 0;
        for (a, (&i, &mi)) in agents.iter().zip(&port_counts).enumerate() {
            for _ in 0..mi {
                xi_diag.push(xi[a]);
                w_diag.push(ratio(part.omega(i)));
                t_hat[(r, a)] = 1.0;
                r += 1;
            }
        }
        let xi_hat = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(xi_diag));
        let w_hat = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(w_diag));

        let mut h_hat = DMatrix::zeros(m_hat, m_hat);
        let mut z_terms = Vec::new();
        for (a, &k) in localized.edges.iter().enumerate() {
            h_hat += &localized.l_hat[a] * ratio(part.eta(k));
            z_terms.push((a, a, ratio(part.zeta(k))));
            for l in part.adjacent_within(p, k) {
                let b = localized
                    .edge_position(l)
                    .expect("adjacent edge inside the element");
                z_terms.push((a, b, ratio(part.theta(k, l))));
            }
        }

        let mut s_hat = DMatrix::zeros(n_p + 2 * m_hat, n_p + m_hat);
        s_hat
            .view_mut((0, 0), (n_p, n_p))
            .fill_with_identity();
        s_hat
            .view_mut((n_p, 0), (m_hat, n_p))
            .copy_from(&(-&t_hat));
        s_hat
            .view_mut((n_p, n_p), (m_hat, m_hat))
            .fill_with_identity();
        s_hat
            .view_mut((n_p + m_hat, n_p), (m_hat, m_hat))
            .copy_from(&(-DMatrix::<f64>::identity(m_hat, m_hat)));

        Ok(Self {
            sector,
            localized,
            agents,
            port_counts,
            xi,
            xi_hat,
            h_hat,
            w_hat,
            t_hat,
            s_hat,
            z_terms,
        })
    }

    /// `n_p = |U_p|`
    pub fn n_p(&self) -> usize {
        self.agents.len()
    }

    pub fn m_hat(&self) -> usize {
        self.localized.m_hat()
    }

    /// Global port ids of the local multiplier variables, in local order.
    pub fn lambda_ports(&self) -> &[usize] {
        &self.localized.rows
    }

    fn check_lambda(&self, lambda: &[f64]) -> Result<(), MultiplierError> {
        if lambda.len() != self.m_hat() {
            return Err(MultiplierError::LambdaLength {
                expected: self.m_hat(),
                got: lambda.len(),
            });
        }
        Ok(())
    }

    /// `(Π̂1, Π̂2, Π̂3)` for local multiplier values.
    pub fn pi_hat(
        &self,
        lambda: &[f64],
    ) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>), MultiplierError> {
        self.check_lambda(lambda)?;
        Ok(stacked_multiplier(&self.sector, &self.port_counts, lambda))
    }

    /// `Π̃ = Ξ̂^{1/2} Π̂ Ξ̂^{1/2}`
    pub fn pi_tilde(&self, lambda: &[f64]) -> Result<DMatrix<f64>, MultiplierError> {
        let (p1, p2, p3) = self.pi_hat(lambda)?;
        let root = self.xi_hat.map(f64::sqrt);
        Ok(&root * join(&p1, &p2, &p3) * &root)
    }

    /// `Ẑ = Σ_k ζ_k L̂_k Π̂3 L̂_k + Σ_k Σ_{l ∈ K_p ∩ L_k} θ_{k,l} L̂_k Π̂3 L̂_l`
    pub fn z_hat(&self, lambda: &[f64]) -> Result<DMatrix<f64>, MultiplierError> {
        let (_, _, p3) = self.pi_hat(lambda)?;
        let l = &self.localized.l_hat;
        let m = self.m_hat();
        Ok(self
            .z_terms
            .iter()
            .fold(DMatrix::zeros(m, m), |acc, &(a, b, w)| {
                acc + &l[a] * &p3 * &l[b] * w
            }))
    }

    /// `[[Φ̂1, Φ̂2], [Φ̂2ᵀ, Φ̂3]] = Ŝᵀ [[Π̃, [Π̂2; Π̂3] Ĥ], [Ĥ [Π̂2ᵀ Π̂3], Ẑ]] Ŝ`
    pub fn phi(&self, lambda: &[f64]) -> Result<DMatrix<f64>, MultiplierError> {
        let (n, m) = (self.n_p(), self.m_hat());
        let (p1, p2, p3) = self.pi_hat(lambda)?;
        let root = self.xi_hat.map(f64::sqrt);
        let tilde = &root * join(&p1, &p2, &p3) * &root;
        let mut col = DMatrix::zeros(n + m, m);
        col.view_mut((0, 0), (n, m)).copy_from(&(&p2 * &self.h_hat));
        col.view_mut((n, 0), (m, m)).copy_from(&(&p3 * &self.h_hat));
        let mut inner = DMatrix::zeros(n + 2 * m, n + 2 * m);
        inner.view_mut((0, 0), (n + m, n + m)).copy_from(&tilde);
        inner.view_mut((0, n + m), (n + m, m)).copy_from(&col);
        inner.view_mut((n + m, 0), (m, n + m)).copy_from(&col.transpose());
        inner
            .view_mut((n + m, n + m), (m, m))
            .copy_from(&self.z_hat(lambda)?);
        let out = self.s_hat.transpose() * inner * &self.s_hat;
        Ok((&out + out.transpose()) * 0.5)
    }

    /// `Φ̂ ⊕ ε Ŵ`, acting on the stacked output `[N̂; D̂; I]`.
    pub fn phi_full(&self, lambda: &[f64], epsilon: f64) -> Result<DMatrix<f64>, MultiplierError> {
        let (n, m) = (self.n_p(), self.m_hat());
        let mut out = DMatrix::zeros(n + 2 * m, n + 2 * m);
        out.view_mut((0, 0), (n + m, n + m))
            .copy_from(&self.phi(lambda)?);
        out.view_mut((n + m, n + m), (m, m))
            .copy_from(&(&self.w_hat * epsilon));
        Ok(out)
    }

    /// Coefficient matrices of `Φ̂_full`, obtained by evaluating at unit vectors.
    pub fn phi_full_coefficients(&self) -> PhiCoefficients {
        let m = self.m_hat();
        let mut unit = vec![0.0; m];
        let lambda = (0..m)
            .map(|j| {
                unit[j] = 1.0;
                let out = self.phi_full(&unit, 0.0).expect("local length");
                unit[j] = 0.0;
                out
            })
            .collect();
        PhiCoefficients {
            lambda,
            epsilon: self.phi_full(&unit, 1.0).expect("local length"),
        }
    }
}

fn ratio(r: num_rational::Rational64) -> f64 {
    crate::graph::to_f64(r)
}

/// Frequency-domain blocks of the monolithic multiplier `Ψ`.
#[derive(Debug, Clone)]
pub struct PsiBlocks {
    /// `2m x 2m`
    pub psi1: DMatrix<Complex64>,
    /// `2m x 2m`
    pub psi2: DMatrix<Complex64>,
    /// `2m x 2m`, equal to `Π3`
    pub psi3: DMatrix<Complex64>,
}

/// Evaluator of `Ψ = [N* J*; 0 -I] Π [N 0; J -I]` for the whole network.
#[derive(Debug, Clone)]
pub struct PsiEvaluator<'a> {
    factors: &'a [CoprimeFactorPair],
    t: DMatrix<f64>,
    pi1: DMatrix<f64>,
    pi2: DMatrix<f64>,
    pi3: DMatrix<f64>,
}

impl PsiEvaluator<'_> {
    /// `Ψ` built from sampled factor responses `N(jω)` (`n x 2m`) and `D(jω)` (`2m x 2m`).
    pub fn from_responses(
        &self,
        n: &DMatrix<Complex64>,
        d: &DMatrix<Complex64>,
    ) -> PsiBlocks {
        let j = d - to_complex(&self.t) * n;
        let (p1, p2, p3) = (to_complex(&self.pi1), to_complex(&self.pi2), to_complex(&self.pi3));
        let (na, ja) = (n.adjoint(), j.adjoint());
        let psi1 = &na * &p1 * n + &na * &p2 * &j + &ja * p2.adjoint() * n + &ja * &p3 * &j;
        let psi2 = -(&na * &p2 + &ja * &p3);
        PsiBlocks { psi1, psi2, psi3: p3 }
    }

    /// Factor responses `(⊕N_i(jω), ⊕D_i(jω))`.
    pub fn responses(&self, omega: f64) -> Option<(DMatrix<Complex64>, DMatrix<Complex64>)> {
        let rows = self.factors.len();
        let ports: usize = self.factors.iter().map(|f| f.inputs()).sum();
        let mut n = DMatrix::zeros(rows, ports);
        let mut d = DMatrix::zeros(ports, ports);
        let mut r = 0;
        for (i, f) in self.factors.iter().enumerate() {
            let mi = f.inputs();
            n.view_mut((i, r), (1, mi)).copy_from(&f.n().freq_response(omega)?);
            d.view_mut((r, r), (mi, mi)).copy_from(&f.d().freq_response(omega)?);
            r += mi;
        }
        Some((n, d))
    }

    pub fn at(&self, omega: f64) -> Option<PsiBlocks> {
        let (n, d) = self.responses(omega)?;
        Some(self.from_responses(&n, &d))
    }
}

/// Monolithic `Ψ` evaluator for network-wide multiplier values `λ` (one per port).
pub fn psi_blocks<'a>(
    g: &GraphTopology,
    sector: &SectorBounds,
    lambda: &[f64],
    factors: &'a [CoprimeFactorPair],
) -> Result<PsiEvaluator<'a>, MultiplierError> {
    if lambda.len() != g.ports() {
        return Err(MultiplierError::LambdaLength {
            expected: g.ports(),
            got: lambda.len(),
        });
    }
    let (pi1, pi2, pi3) = stacked_multiplier(sector, &g.degrees(), lambda);
    Ok(PsiEvaluator {
        factors,
        t: g.subsystem_matrices().t,
        pi1,
        pi2,
        pi3,
    })
}
