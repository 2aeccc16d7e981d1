use nalgebra::DMatrix;

use super::{Complex64, LtiError};

/// Stabilizing solution of `AᵀX + XA - X B R⁻¹ Bᵀ X + Q = 0`.
///
/// Uses the matrix sign function of the Hamiltonian with determinant
/// scaling; the stable invariant subspace is read off `sign(H) + I`.
pub fn care(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<DMatrix<f64>, LtiError> {
    let n = a.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let r_inv = r
        .clone()
        .try_inverse()
        .ok_or_else(|| LtiError::Riccati("R is singular".into()))?;
    let g = b * r_inv * b.transpose();
    let mut z = DMatrix::zeros(2 * n, 2 * n);
    z.view_mut((0, 0), (n, n)).copy_from(a);
    z.view_mut((0, n), (n, n)).copy_from(&(-&g));
    z.view_mut((n, 0), (n, n)).copy_from(&(-q));
    z.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));

    let dim = (2 * n) as f64;
    let mut converged = false;
    for _ in 0..200 {
        let lu = z.clone().lu();
        let log_det: f64 = lu.u().diagonal().iter().map(|x| x.abs().ln()).sum();
        if !log_det.is_finite() {
            return Err(LtiError::Riccati(
                "Hamiltonian has eigenvalues on the imaginary axis".into(),
            ));
        }
        let z_inv = lu
            .try_inverse()
            .ok_or_else(|| LtiError::Riccati("singular iterate".into()))?;
        let c = (-log_det / dim).exp();
        let next = (&z * c + z_inv / c) * 0.5;
        let change = (&next - &z).norm();
        let size = next.norm();
        z = next;
        if change <= 1e-13 * size {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(LtiError::Riccati("sign iteration did not converge".into()));
    }
    let id = DMatrix::<f64>::identity(n, n);
    let mut lhs = DMatrix::zeros(2 * n, n);
    lhs.view_mut((0, 0), (n, n)).copy_from(&z.view((0, n), (n, n)));
    lhs.view_mut((n, 0), (n, n))
        .copy_from(&(z.view((n, n), (n, n)) + &id));
    let mut rhs = DMatrix::zeros(2 * n, n);
    rhs.view_mut((0, 0), (n, n))
        .copy_from(&(-(z.view((0, 0), (n, n)) + &id)));
    rhs.view_mut((n, 0), (n, n))
        .copy_from(&(-z.view((n, 0), (n, n))));
    let x = lhs
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .map_err(|e| LtiError::Riccati(e.to_string()))?;
    let x = (&x + x.transpose()) * 0.5;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(LtiError::Riccati("non-finite solution".into()));
    }
    Ok(x)
}

/// Row vector `f` such that `A + b f` has the requested eigenvalues
/// (Ackermann's formula). Complex poles must come in conjugate pairs.
pub fn place_poles(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    poles: &[Complex64],
) -> Result<DMatrix<f64>, LtiError> {
    let n = a.nrows();
    if b.ncols() != 1 || b.nrows() != n || poles.len() != n {
        return Err(LtiError::DimensionMismatch(format!(
            "pole placement needs a single input column and {n} poles"
        )));
    }
    // characteristic polynomial coefficients, descending
    let mut coef = vec![Complex64::new(1.0, 0.0)];
    for &p in poles {
        let mut next = vec![Complex64::new(0.0, 0.0); coef.len() + 1];
        for (k, &c) in coef.iter().enumerate() {
            next[k] += c;
            next[k + 1] -= c * p;
        }
        coef = next;
    }
    if coef.iter().any(|c| c.im.abs() > 1e-9 * (1.0 + c.re.abs())) {
        return Err(LtiError::DimensionMismatch(
            "complex poles must appear in conjugate pairs".into(),
        ));
    }
    let mut ctrb = DMatrix::zeros(n, n);
    let mut col = b.clone();
    for k in 0..n {
        ctrb.set_column(k, &col.column(0));
        col = a * col;
    }
    let ctrb_inv = ctrb.try_inverse().ok_or(LtiError::Unstabilizable {
        abscissa: f64::INFINITY,
    })?;
    // phi(A) by Horner
    let mut phi = DMatrix::<f64>::zeros(n, n);
    for c in &coef {
        phi = &phi * a + DMatrix::identity(n, n) * c.re;
    }
    let mut last = DMatrix::zeros(1, n);
    last[(0, n - 1)] = 1.0;
    Ok(-(last * ctrb_inv * phi))
}

#[cfg(test)]
mod tests {
    use super::super::spectral_abscissa;
    use super::*;

    fn residual(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, x: &DMatrix<f64>) -> f64 {
        (a.transpose() * x + x * a - x * b * b.transpose() * x + q).norm()
    }

    #[test]
    fn scalar_unstable_plant() {
        // a = 1, b = 1, q = 1: x² - 2x - 1 = 0, stabilizing root 1 + √2
        let a = DMatrix::from_element(1, 1, 1.0);
        let b = DMatrix::from_element(1, 1, 1.0);
        let x = care(&a, &b, &DMatrix::identity(1, 1), &DMatrix::identity(1, 1)).unwrap();
        assert!((x[(0, 0)] - (1.0 + 2f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn double_integrator() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let q = DMatrix::identity(2, 2);
        let x = care(&a, &b, &q, &DMatrix::identity(1, 1)).unwrap();
        assert!(residual(&a, &b, &q, &x) < 1e-10);
        let f = -(b.transpose() * &x);
        assert!(spectral_abscissa(&(&a + &b * f)) < 0.0);
    }

    #[test]
    fn uncontrollable_unstable_mode_fails_or_does_not_stabilize() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        match care(&a, &b, &DMatrix::identity(2, 2), &DMatrix::identity(1, 1)) {
            Err(_) => {}
            Ok(x) => {
                let f = -(b.transpose() * &x);
                assert!(spectral_abscissa(&(&a + &b * f)) >= 0.0);
            }
        }
    }

    #[test]
    fn ackermann_places_poles() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 2.0, -1.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let poles = [Complex64::new(-2.0, 1.0), Complex64::new(-2.0, -1.0)];
        let f = place_poles(&a, &b, &poles).unwrap();
        let eig = (&a + &b * f).complex_eigenvalues();
        for z in eig.iter() {
            assert!((z.re + 2.0).abs() < 1e-10);
            assert!((z.im.abs() - 1.0).abs() < 1e-10);
        }
    }
}
