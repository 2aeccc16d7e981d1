use nalgebra::DMatrix;

use super::{
    balance, care, log_grid, place_poles, Complex64, LtiError, StateSpace, TransferFunction,
    DEFAULT_STABILITY_MARGIN,
};

/// Residual tolerance for the Bezout identity and `H = N D⁻¹`.
pub const FACTOR_TOLERANCE: f64 = 1e-8;

/// Single-output agent dynamics with one input per neighbour.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentModel {
    pub realization: StateSpace,
    /// Set when the agent applies one SISO transfer function to the sum of its inputs.
    pub broadcast: bool,
}

impl AgentModel {
    /// `H = g · 1_{1,inputs}` realized with a single copy of `g`.
    pub fn broadcast(g: &StateSpace, inputs: usize) -> Result<Self, LtiError> {
        if g.nu() != 1 || g.ny() != 1 {
            return Err(LtiError::DimensionMismatch(format!(
                "broadcast agent needs a SISO model, got {}x{}",
                g.ny(),
                g.nu()
            )));
        }
        let ones = DMatrix::from_element(1, inputs, 1.0);
        Ok(Self {
            realization: StateSpace::new(
                g.a.clone(),
                &g.b * &ones,
                g.c.clone(),
                &g.d * &ones,
            )?,
            broadcast: true,
        })
    }

    /// Companion realization of `tf`, balanced, broadcast over `inputs` ports.
    pub fn from_transfer_function(tf: &TransferFunction, inputs: usize) -> Result<Self, LtiError> {
        Self::broadcast(&balance(&tf.realize()?), inputs)
    }

    pub fn from_state_space(sys: StateSpace) -> Result<Self, LtiError> {
        if sys.ny() != 1 {
            return Err(LtiError::DimensionMismatch(format!(
                "agents have a single output, got {}",
                sys.ny()
            )));
        }
        Ok(Self {
            realization: sys,
            broadcast: false,
        })
    }

    pub fn inputs(&self) -> usize {
        self.realization.nu()
    }

    pub fn state_dim(&self) -> usize {
        self.realization.nx()
    }
}

/// How the stabilizing state feedback (and the dual output injection) is chosen.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum FeedbackDesign {
    /// Linear-quadratic regulator with identity weights.
    #[default]
    Lqr,
    /// Ackermann placement through the first input column that renders the
    /// pair controllable; the observer uses the same poles.
    PolePlacement(Vec<Complex64>),
}

/// Right coprime factorization `H = N D⁻¹` with Bezout witnesses
/// `U N + V D = I`.
///
/// `N` and `D` share one state: `(a, b)` drive both `(c_n, d_n)` and `(c_d, d_d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoprimeFactorPair {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c_n: DMatrix<f64>,
    pub d_n: DMatrix<f64>,
    pub c_d: DMatrix<f64>,
    pub d_d: DMatrix<f64>,
    pub u: StateSpace,
    pub v: StateSpace,
    /// Stabilizing feedback `F`; `None` for the trivial factorization of a stable agent.
    pub feedback: Option<DMatrix<f64>>,
}

impl CoprimeFactorPair {
    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn is_trivial(&self) -> bool {
        self.feedback.is_none()
    }

    pub fn n(&self) -> StateSpace {
        StateSpace {
            a: self.a.clone(),
            b: self.b.clone(),
            c: self.c_n.clone(),
            d: self.d_n.clone(),
        }
    }

    pub fn d(&self) -> StateSpace {
        if self.is_trivial() {
            return StateSpace::static_gain(self.d_d.clone());
        }
        StateSpace {
            a: self.a.clone(),
            b: self.b.clone(),
            c: self.c_d.clone(),
            d: self.d_d.clone(),
        }
    }

    /// Largest `‖U N + V D - I‖_F` over `freqs`.
    pub fn bezout_residual(&self, freqs: &[f64]) -> f64 {
        let m = self.inputs();
        let (n, d) = (self.n(), self.d());
        freqs
            .iter()
            .map(|&w| {
                let (nw, dw) = (n.freq_response(w), d.freq_response(w));
                let (uw, vw) = (self.u.freq_response(w), self.v.freq_response(w));
                match (nw, dw, uw, vw) {
                    (Some(nw), Some(dw), Some(uw), Some(vw)) => {
                        (uw * nw + vw * dw - DMatrix::<Complex64>::identity(m, m)).norm()
                    }
                    _ => f64::INFINITY,
                }
            })
            .fold(0.0, f64::max)
    }

    /// Largest `‖H - N D⁻¹‖_F / (1 + ‖H‖_F)` over `freqs`, skipping poles of `H`.
    pub fn factorization_residual(&self, h: &StateSpace, freqs: &[f64]) -> f64 {
        let (n, d) = (self.n(), self.d());
        freqs
            .iter()
            .filter_map(|&w| {
                let hw = h.freq_response(w)?;
                let nw = n.freq_response(w)?;
                let dinv = d.freq_response(w)?.try_inverse()?;
                Some((&hw - nw * dinv).norm() / (1.0 + hw.norm()))
            })
            .fold(0.0, f64::max)
    }
}

/// Coprime factorization of an agent.
///
/// Stable agents get `N = H`, `D = I`, `U = 0`, `V = I`. Otherwise a
/// stabilizing feedback `F` and output injection `L` are designed and
/// `N = (A+BF, B, C+DF, D)`, `D = (A+BF, B, F, I)`,
/// `U = (A+LC, L, F, 0)`, `V = (A+LC, -(B+LD), F, I)`.
pub fn coprime_factorize(
    agent: &AgentModel,
    design: &FeedbackDesign,
) -> Result<CoprimeFactorPair, LtiError> {
    let sys = &agent.realization;
    let (nx, m) = (sys.nx(), sys.nu());
    if sys.stability(DEFAULT_STABILITY_MARGIN).stable {
        return Ok(CoprimeFactorPair {
            a: sys.a.clone(),
            b: sys.b.clone(),
            c_n: sys.c.clone(),
            d_n: sys.d.clone(),
            c_d: DMatrix::zeros(m, nx),
            d_d: DMatrix::identity(m, m),
            u: StateSpace::static_gain(DMatrix::zeros(m, 1)),
            v: StateSpace::static_gain(DMatrix::identity(m, m)),
            feedback: None,
        });
    }

    let f = match design {
        FeedbackDesign::Lqr => {
            let x = care(&sys.a, &sys.b, &DMatrix::identity(nx, nx), &DMatrix::identity(m, m))
                .map_err(|_| LtiError::Unstabilizable {
                    abscissa: sys.spectral_abscissa(),
                })?;
            -(sys.b.transpose() * x)
        }
        FeedbackDesign::PolePlacement(poles) => {
            let mut found = None;
            for j in 0..m {
                let col = sys.b.columns(j, 1).into_owned();
                if let Ok(row) = place_poles(&sys.a, &col, poles) {
                    let mut f = DMatrix::zeros(m, nx);
                    f.set_row(j, &row.row(0));
                    found = Some(f);
                    break;
                }
            }
            found.ok_or(LtiError::Unstabilizable {
                abscissa: sys.spectral_abscissa(),
            })?
        }
    };
    let a_f = &sys.a + &sys.b * &f;
    let abscissa = super::spectral_abscissa(&a_f);
    if abscissa >= -DEFAULT_STABILITY_MARGIN {
        return Err(LtiError::Unstabilizable { abscissa });
    }

    let l = match design {
        FeedbackDesign::Lqr => {
            let x = care(
                &sys.a.transpose(),
                &sys.c.transpose(),
                &DMatrix::identity(nx, nx),
                &DMatrix::identity(1, 1),
            )
            .map_err(|_| LtiError::Undetectable {
                abscissa: sys.spectral_abscissa(),
            })?;
            -(x * sys.c.transpose())
        }
        FeedbackDesign::PolePlacement(poles) => {
            place_poles(&sys.a.transpose(), &sys.c.transpose(), poles)
                .map_err(|_| LtiError::Undetectable {
                    abscissa: sys.spectral_abscissa(),
                })?
                .transpose()
        }
    };
    let a_l = &sys.a + &l * &sys.c;
    let abscissa = super::spectral_abscissa(&a_l);
    if abscissa >= -DEFAULT_STABILITY_MARGIN {
        return Err(LtiError::Undetectable { abscissa });
    }

    let pair = CoprimeFactorPair {
        a: a_f,
        b: sys.b.clone(),
        c_n: &sys.c + &sys.d * &f,
        d_n: sys.d.clone(),
        c_d: f.clone(),
        d_d: DMatrix::identity(m, m),
        u: StateSpace::new(a_l.clone(), l.clone(), f.clone(), DMatrix::zeros(m, 1))?,
        v: StateSpace::new(
            a_l,
            -(&sys.b + &l * &sys.d),
            f.clone(),
            DMatrix::identity(m, m),
        )?,
        feedback: Some(f),
    };

    let grid = log_grid(1e-3, 1e3, 50);
    let residual = pair
        .bezout_residual(&grid)
        .max(pair.factorization_residual(sys, &grid));
    if !(residual <= FACTOR_TOLERANCE) {
        return Err(LtiError::ResidualTooLarge {
            residual,
            tolerance: FACTOR_TOLERANCE,
        });
    }
    Ok(pair)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn siso(num: &[f64], den: &[f64]) -> StateSpace {
        TransferFunction::new(num.to_vec(), den.to_vec()).realize().unwrap()
    }

    #[test]
    fn stable_agent_gets_trivial_factors() {
        let agent = AgentModel::from_transfer_function(&TransferFunction::new(vec![5.0], vec![1.0, 10.0]), 2).unwrap();
        let pair = coprime_factorize(&agent, &FeedbackDesign::Lqr).unwrap();
        assert!(pair.is_trivial());
        assert_eq!(pair.d().nx(), 0);
        assert_eq!(pair.d().d, DMatrix::identity(2, 2));
        let grid = log_grid(1e-3, 1e3, 50);
        assert_eq!(pair.bezout_residual(&grid), 0.0);
        assert!(pair.factorization_residual(&agent.realization, &grid) < 1e-15);
    }

    #[test]
    fn first_order_unstable_with_prescribed_gain() {
        // H = 1/(s-1), F = -2: N = 1/(s+1), D = (s-1)/(s+1)
        let agent = AgentModel::from_state_space(siso(&[1.0], &[1.0, -1.0])).unwrap();
        let pair = coprime_factorize(
            &agent,
            &FeedbackDesign::PolePlacement(vec![Complex64::new(-1.0, 0.0)]),
        )
        .unwrap();
        assert!((pair.feedback.as_ref().unwrap()[(0, 0)] + 2.0).abs() < 1e-12);
        for w in [0.1, 1.0, 10.0] {
            let s = Complex64::new(0.0, w);
            let n = pair.n().eval(s).unwrap()[(0, 0)];
            let d = pair.d().eval(s).unwrap()[(0, 0)];
            assert!((n - 1.0 / (s + 1.0)).norm() < 1e-12);
            assert!((d - (s - 1.0) / (s + 1.0)).norm() < 1e-12);
            assert!((n / d - 1.0 / (s - 1.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn lqr_factorization_of_unstable_two_input_agent() {
        let g = siso(&[1.0, 2.0], &[1.0, -1.0, 3.0]);
        let agent = AgentModel::broadcast(&g, 2).unwrap();
        let pair = coprime_factorize(&agent, &FeedbackDesign::Lqr).unwrap();
        assert!(!pair.is_trivial());
        assert!(pair.n().is_stable() && pair.d().is_stable());
        assert!(pair.u.is_stable() && pair.v.is_stable());
        let grid = log_grid(1e-3, 1e3, 50);
        assert!(pair.bezout_residual(&grid) < FACTOR_TOLERANCE);
        assert!(pair.factorization_residual(&agent.realization, &grid) < FACTOR_TOLERANCE);
    }

    #[test]
    fn uncontrollable_unstable_mode_is_reported() {
        let sys = StateSpace::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            DMatrix::zeros(1, 1),
        )
        .unwrap();
        let agent = AgentModel::from_state_space(sys).unwrap();
        assert!(matches!(
            coprime_factorize(&agent, &FeedbackDesign::Lqr),
            Err(LtiError::Unstabilizable { .. })
        ));
    }
}
