//! Continuous-time state-space models, coprime factorization of agent
//! dynamics, and the network-level closed loops built from them.

mod coprime;
mod network;
mod realize;
mod riccati;

pub use coprime::{coprime_factorize, AgentModel, CoprimeFactorPair, FeedbackDesign};
pub use network::{
    stack_factors,
    check_nominal_stability, closed_loop_matrix, stacked_realization, NominalCheck,
};
pub use realize::{balance, TransferFunction};
pub use riccati::{care, place_poles};

use nalgebra::{Complex, DMatrix};
use thiserror::Error;

pub type Complex64 = Complex<f64>;

/// Default margin on the spectral abscissa below which a model counts as stable.
pub const DEFAULT_STABILITY_MARGIN: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LtiError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),
    #[error("transfer function is improper (numerator degree {num} > denominator degree {den})")]
    NotProper { num: usize, den: usize },
    #[error("denominator has no non-zero coefficient")]
    ZeroDenominator,
    #[error("no stabilizing feedback found; closed-loop spectral abscissa {abscissa:.3e}")]
    Unstabilizable { abscissa: f64 },
    #[error("no stabilizing output injection found; spectral abscissa {abscissa:.3e}")]
    Undetectable { abscissa: f64 },
    #[error("Riccati solver failed: {0}")]
    Riccati(String),
    #[error("coprime factorization residual {residual:.3e} exceeds {tolerance:.1e}")]
    ResidualTooLarge { residual: f64, tolerance: f64 },
    #[error("ill-posed interconnection: static loop gain is singular (reciprocal condition {rcond:.3e})")]
    AlgebraicLoop { rcond: f64 },
    #[error("agent {agent}: expected {expected} inputs and 1 output, got {inputs} inputs and {outputs} outputs")]
    AgentPorts {
        agent: usize,
        expected: usize,
        inputs: usize,
        outputs: usize,
    },
    #[error("expected {expected} agents, got {got}")]
    AgentCount { expected: usize, got: usize },
}

/// Real continuous-time realization `(A, B, C, D)`; `A` may be `0 x 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
}

/// Spectral abscissa and the verdict against a margin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stability {
    pub abscissa: f64,
    pub stable: bool,
}

impl StateSpace {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
    ) -> Result<Self, LtiError> {
        let nx = a.nrows();
        if a.ncols() != nx {
            return Err(LtiError::DimensionMismatch(format!(
                "A is {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != nx || c.ncols() != nx || d.nrows() != c.nrows() || d.ncols() != b.ncols() {
            return Err(LtiError::DimensionMismatch(format!(
                "A {nx}x{nx}, B {}x{}, C {}x{}, D {}x{}",
                b.nrows(),
                b.ncols(),
                c.nrows(),
                c.ncols(),
                d.nrows(),
                d.ncols()
            )));
        }
        for (name, m) in [("A", &a), ("B", &b), ("C", &c), ("D", &d)] {
            if m.iter().any(|x| !x.is_finite()) {
                return Err(LtiError::NonFinite(name));
            }
        }
        Ok(Self { a, b, c, d })
    }

    /// Memoryless gain `D`.
    pub fn static_gain(d: DMatrix<f64>) -> Self {
        let (ny, nu) = d.shape();
        Self {
            a: DMatrix::zeros(0, 0),
            b: DMatrix::zeros(0, nu),
            c: DMatrix::zeros(ny, 0),
            d,
        }
    }

    pub fn nx(&self) -> usize {
        self.a.nrows()
    }

    pub fn nu(&self) -> usize {
        self.b.ncols()
    }

    pub fn ny(&self) -> usize {
        self.c.nrows()
    }

    /// Transfer matrix `C (sI - A)⁻¹ B + D` at complex `s`.
    ///
    /// Returns `None` when `s` is an eigenvalue of `A` to working precision.
    pub fn eval(&self, s: Complex64) -> Option<DMatrix<Complex64>> {
        let d = to_complex(&self.d);
        if self.nx() == 0 {
            return Some(d);
        }
        let nx = self.nx();
        let resolvent = DMatrix::<Complex64>::identity(nx, nx) * s - to_complex(&self.a);
        let x = resolvent.lu().solve(&to_complex(&self.b))?;
        Some(to_complex(&self.c) * x + d)
    }

    /// Frequency response at `s = jω`.
    pub fn freq_response(&self, omega: f64) -> Option<DMatrix<Complex64>> {
        self.eval(Complex64::new(0.0, omega))
    }

    /// Largest real part among the eigenvalues of `A`; `-inf` for static models.
    pub fn spectral_abscissa(&self) -> f64 {
        spectral_abscissa(&self.a)
    }

    pub fn stability(&self, margin: f64) -> Stability {
        let abscissa = self.spectral_abscissa();
        Stability {
            abscissa,
            stable: abscissa < -margin,
        }
    }

    pub fn is_stable(&self) -> bool {
        self.stability(DEFAULT_STABILITY_MARGIN).stable
    }

    /// Block-diagonal (direct-sum) realization of `models`.
    pub fn direct_sum(models: &[&StateSpace]) -> Self {
        let nx: usize = models.iter().map(|m| m.nx()).sum();
        let nu: usize = models.iter().map(|m| m.nu()).sum();
        let ny: usize = models.iter().map(|m| m.ny()).sum();
        let mut out = Self {
            a: DMatrix::zeros(nx, nx),
            b: DMatrix::zeros(nx, nu),
            c: DMatrix::zeros(ny, nx),
            d: DMatrix::zeros(ny, nu),
        };
        let (mut x0, mut u0, mut y0) = (0, 0, 0);
        for m in models {
            let (x, u, y) = (m.nx(), m.nu(), m.ny());
            out.a.view_mut((x0, x0), (x, x)).copy_from(&m.a);
            out.b.view_mut((x0, u0), (x, u)).copy_from(&m.b);
            out.c.view_mut((y0, x0), (y, x)).copy_from(&m.c);
            out.d.view_mut((y0, u0), (y, u)).copy_from(&m.d);
            x0 += x;
            u0 += u;
            y0 += y;
        }
        out
    }
}

/// Largest real part of the eigenvalues of a square matrix.
pub fn spectral_abscissa(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return f64::NEG_INFINITY;
    }
    a.clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

pub(crate) fn to_complex(m: &DMatrix<f64>) -> DMatrix<Complex64> {
    m.map(|x| Complex64::new(x, 0.0))
}

/// `n` log-spaced frequencies on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..n)
        .map(|k| 10f64.powf(a + (b - a) * k as f64 / (n - 1) as f64))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_stability() {
        let s = StateSpace::new(
            DMatrix::from_element(1, 1, -1.0),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::zeros(1, 1),
        )
        .unwrap();
        let st = s.stability(DEFAULT_STABILITY_MARGIN);
        assert!(st.stable);
        assert!((st.abscissa + 1.0).abs() < 1e-14);

        let u = StateSpace::new(
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::zeros(1, 1),
        )
        .unwrap();
        assert!(!u.is_stable());
        assert!((u.spectral_abscissa() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_dimensions_and_values() {
        let r = StateSpace::new(
            DMatrix::zeros(2, 2),
            DMatrix::zeros(1, 1),
            DMatrix::zeros(1, 2),
            DMatrix::zeros(1, 1),
        );
        assert!(matches!(r, Err(LtiError::DimensionMismatch(_))));
        let r = StateSpace::new(
            DMatrix::from_element(1, 1, f64::NAN),
            DMatrix::zeros(1, 1),
            DMatrix::zeros(1, 1),
            DMatrix::zeros(1, 1),
        );
        assert_eq!(r, Err(LtiError::NonFinite("A")));
    }

    #[test]
    fn static_gain_response() {
        let s = StateSpace::static_gain(DMatrix::from_row_slice(1, 2, &[2.0, 3.0]));
        assert_eq!(s.spectral_abscissa(), f64::NEG_INFINITY);
        let h = s.freq_response(7.0).unwrap();
        assert_eq!(h[(0, 1)], Complex64::new(3.0, 0.0));
    }

    #[test]
    fn grid_endpoints() {
        let g = log_grid(1e-3, 1e3, 50);
        assert_eq!(g.len(), 50);
        assert!((g[0] - 1e-3).abs() < 1e-15);
        assert!((g[49] - 1e3).abs() < 1e-9);
    }
}
