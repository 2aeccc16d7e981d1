use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, NonnegativeConeT, PSDTriangleConeT,
    SolverStatus, SupportedConeT,
};

use super::sdp::{svec, LinearSdp, SdpBackend, SdpSolution, SdpStatus};
use super::{CertifyError, SolverOptions};

/// Reference backend built on the Clarabel interior-point solver.
#[derive(Debug, Clone, Copy, Default)]
pub struct ClarabelBackend;

impl SdpBackend for ClarabelBackend {
    fn name(&self) -> &'static str {
        "clarabel"
    }

    fn solve(&self, sdp: &LinearSdp, options: &SolverOptions) -> Result<SdpSolution, CertifyError> {
        let n = sdp.num_vars;
        // rows of A and b, column-sparse; s = b - A x lies in the cone product
        let mut columns: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        let mut b = Vec::new();
        let mut cones: Vec<SupportedConeT<f64>> = Vec::new();

        let mut nonneg = 0;
        for bound in &sdp.bounds {
            if let Some(lo) = bound.lower {
                columns[bound.var].push((b.len(), -1.0));
                b.push(-lo);
                nonneg += 1;
            }
            if let Some(hi) = bound.upper {
                columns[bound.var].push((b.len(), 1.0));
                b.push(hi);
                nonneg += 1;
            }
        }
        if nonneg > 0 {
            cones.push(NonnegativeConeT(nonneg));
        }
        for lmi in &sdp.lmis {
            let row0 = b.len();
            b.extend(svec(&lmi.constant).into_iter().map(|v| -v));
            for (j, f) in &lmi.terms {
                for (r, v) in svec(f).into_iter().enumerate() {
                    if v != 0.0 {
                        columns[*j].push((row0 + r, v));
                    }
                }
            }
            cones.push(PSDTriangleConeT(lmi.dim()));
        }

        let rows = b.len();
        let mut colptr = Vec::with_capacity(n + 1);
        let mut rowval = Vec::new();
        let mut nzval = Vec::new();
        colptr.push(0);
        for mut col in columns {
            col.sort_by_key(|&(r, _)| r);
            // merge repeated rows from repeated variable terms
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(col.len());
            for (r, v) in col {
                match merged.last_mut() {
                    Some(last) if last.0 == r => last.1 += v,
                    _ => merged.push((r, v)),
                }
            }
            for (r, v) in merged {
                rowval.push(r);
                nzval.push(v);
            }
            colptr.push(rowval.len());
        }
        let a = CscMatrix::new(rows, n, colptr, rowval, nzval);
        let p = CscMatrix::<f64>::zeros((n, n));

        let settings = DefaultSettingsBuilder::default()
            .verbose(options.verbose)
            .max_iter(options.max_iterations)
            .tol_gap_abs(options.tolerance)
            .tol_gap_rel(options.tolerance)
            .tol_feas(options.tolerance)
            .build()
            .map_err(|e| CertifyError::SolverFailure(e.to_string()))?;
        let mut solver = DefaultSolver::new(&p, &sdp.objective, &a, &b, &cones, settings)
            .map_err(|e| CertifyError::SolverFailure(format!("{e:?}")))?;
        solver.solve();
        let sol = &solver.solution;
        let status = match sol.status {
            SolverStatus::Solved => SdpStatus::Optimal,
            SolverStatus::AlmostSolved => SdpStatus::Inaccurate,
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                SdpStatus::Infeasible
            }
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
                SdpStatus::Unbounded
            }
            other => SdpStatus::Failed(format!("{other:?}")),
        };
        Ok(SdpSolution {
            x: sol.x.clone(),
            status,
            iterations: sol.iterations,
            seconds: sol.solve_time,
        })
    }
}

#[cfg(test)]
mod tests {
    use nalgebra::DMatrix;

    use super::super::sdp::{Bound, SymAffine};
    use super::*;

    #[test]
    fn maximizes_margin_of_fixed_matrix() {
        // max t s.t. diag(-1, -2) + t I ⪯ 0 → t = 1
        let sdp = LinearSdp {
            num_vars: 1,
            objective: vec![-1.0],
            lmis: vec![SymAffine {
                constant: DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -2.0]),
                terms: vec![(0, DMatrix::identity(2, 2))],
            }],
            bounds: vec![],
        };
        let sol = ClarabelBackend.solve(&sdp, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert!((sol.x[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn off_diagonal_coupling_and_bounds() {
        // max t s.t. [[-1, x], [x, -1]] + t I ⪯ 0, x ≥ 0.5 → t = 0.5 at x = 0.5
        let sdp = LinearSdp {
            num_vars: 2,
            objective: vec![0.0, -1.0],
            lmis: vec![SymAffine {
                constant: DMatrix::identity(2, 2) * -1.0,
                terms: vec![
                    (0, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])),
                    (1, DMatrix::identity(2, 2)),
                ],
            }],
            bounds: vec![Bound { var: 0, lower: Some(0.5), upper: Some(2.0) }],
        };
        let sol = ClarabelBackend.solve(&sdp, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert!((sol.x[0] - 0.5).abs() < 1e-6);
        assert!((sol.x[1] - 0.5).abs() < 1e-6);
    }
}
