use nalgebra::{DMatrix, DVector};

use super::GraphTopology;

/// Routing permutation, incidence matrix, Laplacian and port-replication
/// matrix of the 1-regular sub-system graph.
///
/// All entries are small integers stored as `f64`, so products stay exact.
#[derive(Debug, Clone)]
pub struct SubsystemMatrices {
    /// `2m x 2m` routing permutation.
    pub p: DMatrix<f64>,
    /// `2m x m` incidence matrix.
    pub b: DMatrix<f64>,
    /// `2m x 2m` Laplacian `B Bᵀ`.
    pub l: DMatrix<f64>,
    /// `2m x n` replication matrix `⊕ 1_{m_i}`.
    pub t: DMatrix<f64>,
}

impl SubsystemMatrices {
    pub fn new(g: &GraphTopology) -> Self {
        let ports = g.ports();
        let mut p = DMatrix::zeros(ports, ports);
        for i in 0..g.n() {
            for (k, &j) in g.neighbours(i).iter().enumerate() {
                let r = g.offset(i) + k;
                let q = g.port(j, i).expect("neighbour relation is symmetric");
                p[(r, q)] = 1.0;
            }
        }

        let mut b = DMatrix::zeros(ports, g.m());
        for k in 0..g.m() {
            b.set_column(k, &incidence_column(g, k));
        }
        let l = &b * b.transpose();

        let mut t = DMatrix::zeros(ports, g.n());
        for i in 0..g.n() {
            for r in g.port_range(i) {
                t[(r, i)] = 1.0;
            }
        }
        Self { p, b, l, t }
    }

    /// Rank-one Laplacian term of edge `k`.
    pub fn edge_laplacian(&self, k: usize) -> DMatrix<f64> {
        let col = self.b.column(k);
        col * col.transpose()
    }
}

/// Column `k` of the incidence matrix: `+1` at the port of the smaller
/// endpoint, `-1` at the port of the larger one.
pub(crate) fn incidence_column(g: &GraphTopology, k: usize) -> DVector<f64> {
    let (i, j) = g.edge(k);
    let mut col = DVector::zeros(g.ports());
    col[g.port(i, j).unwrap()] = 1.0;
    col[g.port(j, i).unwrap()] = -1.0;
    col
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_edge_matrices() {
        let g = GraphTopology::new(2, &[(0, 1)]).unwrap();
        let s = g.subsystem_matrices();
        assert_eq!(s.p, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
        assert_eq!(s.b, DMatrix::from_row_slice(2, 1, &[1.0, -1.0]));
        assert_eq!(s.l, DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
    }

    #[test]
    fn path_of_three_routing() {
        // ports: (0,→1)=0, (1,→0)=1, (1,→2)=2, (2,→1)=3
        let g = GraphTopology::path(3).unwrap();
        let s = g.subsystem_matrices();
        let cols: Vec<usize> = (0..4)
            .map(|r| (0..4).find(|&q| s.p[(r, q)] == 1.0).unwrap())
            .collect();
        assert_eq!(cols, vec![1, 0, 3, 2]);
    }

    #[test]
    fn routing_identities() {
        let g = GraphTopology::new(4, &[(0, 1), (0, 2), (0, 3), (2, 3)]).unwrap();
        let s = g.subsystem_matrices();
        let id = DMatrix::identity(8, 8);
        assert_eq!(s.p, s.p.transpose());
        assert_eq!(&s.p * &s.p, id);
        assert_eq!(s.p, &id - &s.l);
        let tt = s.t.transpose() * &s.t;
        assert_eq!(tt, DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0, 2.0, 2.0])));
        let sum: DMatrix<f64> = (0..4).map(|k| s.edge_laplacian(k)).fold(DMatrix::zeros(8, 8), |a, b| a + b);
        assert_eq!(sum, s.l);
    }
}
