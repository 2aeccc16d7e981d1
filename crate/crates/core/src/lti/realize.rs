use nalgebra::DMatrix;

use super::{LtiError, StateSpace};

/// SISO transfer function with polynomial coefficients in descending powers of `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferFunction {
    pub num: Vec<f64>,
    pub den: Vec<f64>,
}

impl TransferFunction {
    pub fn new(num: Vec<f64>, den: Vec<f64>) -> Self {
        Self { num, den }
    }

    /// Controllable companion-form realization.
    ///
    /// Leading zeros are stripped; common factors are not cancelled, so the
    /// realization is minimal only if numerator and denominator are coprime.
    pub fn realize(&self) -> Result<StateSpace, LtiError> {
        let den = strip_leading_zeros(&self.den);
        if den.is_empty() {
            return Err(LtiError::ZeroDenominator);
        }
        let num = strip_leading_zeros(&self.num);
        if num.iter().chain(den.iter()).any(|x| !x.is_finite()) {
            return Err(LtiError::NonFinite("transfer function"));
        }
        let n = den.len() - 1;
        if num.len() > den.len() {
            return Err(LtiError::NotProper {
                num: num.len() - 1,
                den: n,
            });
        }
        let lead = den[0];
        let a_coef: Vec<f64> = den.iter().map(|x| x / lead).collect();
        let mut b_coef = vec![0.0; n + 1 - num.len()];
        b_coef.extend(num.iter().map(|x| x / lead));

        let d = b_coef[0];
        if n == 0 {
            return Ok(StateSpace::static_gain(DMatrix::from_element(1, 1, d)));
        }
        let mut a = DMatrix::zeros(n, n);
        for r in 0..n - 1 {
            a[(r, r + 1)] = 1.0;
        }
        for c in 0..n {
            a[(n - 1, c)] = -a_coef[n - c];
        }
        let mut b = DMatrix::zeros(n, 1);
        b[(n - 1, 0)] = 1.0;
        let mut c = DMatrix::zeros(1, n);
        for col in 0..n {
            c[(0, col)] = b_coef[n - col] - d * a_coef[n - col];
        }
        StateSpace::new(a, b, c, DMatrix::from_element(1, 1, d))
    }
}

fn strip_leading_zeros(p: &[f64]) -> Vec<f64> {
    p.iter().copied().skip_while(|&x| x == 0.0).collect()
}

/// Diagonal similarity scaling of `A` by powers of two so that row and
/// column norms are comparable; `B` and `C` are transformed consistently.
pub fn balance(sys: &StateSpace) -> StateSpace {
    let n = sys.nx();
    if n == 0 {
        return sys.clone();
    }
    const RADIX: f64 = 2.0;
    let mut a = sys.a.clone();
    let mut scale = vec![1.0f64; n];
    let mut converged = false;
    let mut sweeps = 0;
    while !converged && sweeps < 100 {
        converged = true;
        sweeps += 1;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += a[(j, i)].abs();
                    r += a[(i, j)].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let mut cc = c;
            let mut rr = r;
            while cc < rr / RADIX {
                cc *= RADIX;
                rr /= RADIX;
                f *= RADIX;
            }
            while cc >= rr * RADIX {
                cc /= RADIX;
                rr *= RADIX;
                f /= RADIX;
            }
            if (cc + rr) < 0.95 * s {
                converged = false;
                scale[i] *= f;
                for j in 0..n {
                    a[(i, j)] /= f;
                    a[(j, i)] *= f;
                }
            }
        }
    }
    let mut b = sys.b.clone();
    let mut c = sys.c.clone();
    for (i, &s) in scale.iter().enumerate() {
        b.row_mut(i).scale_mut(1.0 / s);
        c.column_mut(i).scale_mut(s);
    }
    StateSpace {
        a,
        b,
        c,
        d: sys.d.clone(),
    }
}
