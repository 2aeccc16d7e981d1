use std::io::{self, Write};

use nalgebra::DMatrix;

use super::{CertifyError, SolverOptions};

/// Symmetric matrix-valued affine map `F(x) = F0 + Σ_j x_j F_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymAffine {
    pub constant: DMatrix<f64>,
    /// `(variable index, coefficient)`; an index may appear more than once.
    pub terms: Vec<(usize, DMatrix<f64>)>,
}

impl SymAffine {
    pub fn zeros(dim: usize) -> Self {
        Self {
            constant: DMatrix::zeros(dim, dim),
            terms: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.constant.nrows()
    }

    pub fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        self.terms
            .iter()
            .fold(self.constant.clone(), |acc, (j, f)| acc + f * x[*j])
    }
}

/// Box constraint on one decision variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bound {
    pub var: usize,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

/// `minimize cᵀx` subject to `F_i(x) ⪯ 0` for every LMI and the box bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSdp {
    pub num_vars: usize,
    pub objective: Vec<f64>,
    pub lmis: Vec<SymAffine>,
    pub bounds: Vec<Bound>,
}

impl LinearSdp {
    /// Plain-text dump: dimensions, bounds, then per LMI the constant and
    /// each variable's coefficient matrix, row-major, round-trip precision.
    pub fn write_text<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "variables {}", self.num_vars)?;
        write!(w, "objective")?;
        for c in &self.objective {
            write!(w, " {c:e}")?;
        }
        writeln!(w)?;
        writeln!(w, "bounds {}", self.bounds.len())?;
        let fmt = |v: Option<f64>, inf: &str| v.map_or(inf.to_string(), |x| format!("{x:e}"));
        for b in &self.bounds {
            writeln!(w, "{} {} {}", b.var, fmt(b.lower, "-inf"), fmt(b.upper, "inf"))?;
        }
        writeln!(w, "lmis {}", self.lmis.len())?;
        for (i, lmi) in self.lmis.iter().enumerate() {
            writeln!(w, "lmi {i} dim {} terms {}", lmi.dim(), lmi.terms.len())?;
            writeln!(w, "constant")?;
            write_matrix(&mut w, &lmi.constant)?;
            for (j, f) in &lmi.terms {
                writeln!(w, "var {j}")?;
                write_matrix(&mut w, f)?;
            }
        }
        Ok(())
    }
}

fn write_matrix<W: Write>(w: &mut W, m: &DMatrix<f64>) -> io::Result<()> {
    for r in 0..m.nrows() {
        let row: Vec<String> = m.row(r).iter().map(|v| format!("{v:e}")).collect();
        writeln!(w, "{}", row.join(" "))?;
    }
    Ok(())
}

/// Termination class reported by a backend.
#[derive(Debug, Clone, PartialEq)]
pub enum SdpStatus {
    Optimal,
    /// Solved to reduced accuracy.
    Inaccurate,
    Infeasible,
    Unbounded,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpSolution {
    pub x: Vec<f64>,
    pub status: SdpStatus,
    pub iterations: u32,
    pub seconds: f64,
}

/// Interior-point solver for [`LinearSdp`] problems.
pub trait SdpBackend: Send + Sync {
    fn name(&self) -> &'static str;
    fn solve(&self, sdp: &LinearSdp, options: &SolverOptions) -> Result<SdpSolution, CertifyError>;
}

/// Upper triangle, column by column, off-diagonal entries scaled by `√2`.
pub fn svec(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for c in 0..n {
        for r in 0..=c {
            let v = m[(r, c)];
            out.push(if r == c { v } else { v * std::f64::consts::SQRT_2 });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svec_preserves_inner_product() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 5.0, 3.0, 5.0, 6.0]);
        let b = DMatrix::from_row_slice(3, 3, &[0.5, -1.0, 0.0, -1.0, 2.0, 1.5, 0.0, 1.5, -3.0]);
        let sa = svec(&a);
        let sb = svec(&b);
        let dot: f64 = sa.iter().zip(&sb).map(|(x, y)| x * y).sum();
        assert!((dot - a.dot(&b)).abs() < 1e-12);
        assert_eq!(sa.len(), 6);
        assert_eq!(sa[0], 1.0);
        assert!((sa[1] - 2.0 * std::f64::consts::SQRT_2).abs() < 1e-15);
        assert_eq!(sa[2], 4.0);
    }

    #[test]
    fn affine_evaluation_and_dump() {
        let f = SymAffine {
            constant: DMatrix::identity(2, 2),
            terms: vec![(1, DMatrix::from_element(2, 2, 1.0)), (1, DMatrix::identity(2, 2))],
        };
        assert_eq!(f.eval(&[9.0, 2.0]), DMatrix::from_row_slice(2, 2, &[5.0, 2.0, 2.0, 5.0]));
        let sdp = LinearSdp {
            num_vars: 2,
            objective: vec![0.0, -1.0],
            lmis: vec![f],
            bounds: vec![Bound { var: 1, lower: None, upper: Some(3.0) }],
        };
        let mut buf = Vec::new();
        sdp.write_text(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("variables 2\nobjective 0e0 -1e0\nbounds 1\n1 -inf 3e0\nlmis 1\n"));
        assert!(text.contains("var 1\n1e0 1e0\n1e0 1e0\n"));
    }
}
