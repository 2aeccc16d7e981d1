use nalgebra::{DMatrix, DVector};

use super::subsystem::incidence_column;
use super::{EdgePartition, GraphTopology};

/// Quantities of one partition element expressed on its own ports.
#[derive(Debug, Clone)]
pub struct LocalizedMatrices {
    pub element: usize,
    /// Global sub-system rows owned by the element's vertices, in natural order.
    pub rows: Vec<usize>,
    /// Edge ids of the element, aligned with `b_hat` and `l_hat`.
    pub edges: Vec<usize>,
    pub b_hat: Vec<DVector<f64>>,
    pub l_hat: Vec<DMatrix<f64>>,
    /// Sum of `l_hat` over the element's edges.
    pub l_hat_sum: DMatrix<f64>,
    /// `2m x 2m` permutation moving `rows` to the front, order preserved.
    pub omega: DMatrix<f64>,
}

impl LocalizedMatrices {
    pub fn new(g: &GraphTopology, part: &EdgePartition, p: usize) -> Option<Self> {
        if p >= part.len() {
            return None;
        }
        let rows: Vec<usize> = part
            .vertices(p)
            .iter()
            .flat_map(|&i| g.port_range(i))
            .collect();
        let m_hat = rows.len();
        let edges = part.edges(p).to_vec();
        let b_hat: Vec<DVector<f64>> = edges
            .iter()
            .map(|&k| {
                let col = incidence_column(g, k);
                DVector::from_iterator(m_hat, rows.iter().map(|&r| col[r]))
            })
            .collect();
        let l_hat: Vec<DMatrix<f64>> = b_hat.iter().map(|b| b * b.transpose()).collect();
        let l_hat_sum = l_hat
            .iter()
            .fold(DMatrix::zeros(m_hat, m_hat), |acc, l| acc + l);

        let ports = g.ports();
        let mut in_rows = vec![false; ports];
        for &r in &rows {
            in_rows[r] = true;
        }
        let order: Vec<usize> = rows
            .iter()
            .copied()
            .chain((0..ports).filter(|&r| !in_rows[r]))
            .collect();
        let mut omega = DMatrix::zeros(ports, ports);
        for (new, &old) in order.iter().enumerate() {
            omega[(new, old)] = 1.0;
        }

        Some(Self {
            element: p,
            rows,
            edges,
            b_hat,
            l_hat,
            l_hat_sum,
            omega,
        })
    }

    /// Local port count `m̂_p`.
    pub fn m_hat(&self) -> usize {
        self.rows.len()
    }

    /// Position of edge `k` within this element, if present.
    pub fn edge_position(&self, k: usize) -> Option<usize> {
        self.edges.iter().position(|&e| e == k)
    }

    /// Embeds an `m̂ x m̂` local matrix into `2m x 2m` coordinates (`Ωᵀ (X ⊕ 0) Ω`).
    pub fn embed<T: nalgebra::Scalar + num_traits::Zero + Copy>(
        &self,
        local: &DMatrix<T>,
        ports: usize,
    ) -> DMatrix<T> {
        let mut out = DMatrix::from_element(ports, ports, T::zero());
        for (a, &ra) in self.rows.iter().enumerate() {
            for (b, &rb) in self.rows.iter().enumerate() {
                out[(ra, rb)] = local[(a, b)];
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn whole_graph_element_is_identity_embedding() {
        let g = GraphTopology::path(4).unwrap();
        let part = EdgePartition::whole(&g);
        let loc = LocalizedMatrices::new(&g, &part, 0).unwrap();
        let s = g.subsystem_matrices();
        assert_eq!(loc.m_hat(), 6);
        assert_eq!(loc.omega, DMatrix::identity(6, 6));
        for k in 0..3 {
            assert_eq!(loc.l_hat[k], s.edge_laplacian(k));
        }
    }

    #[test]
    fn first_element_of_five_way_split() {
        let g = GraphTopology::path(12).unwrap();
        let sets: Vec<Vec<usize>> = vec![
            (0..3).collect(),
            (2..5).collect(),
            (4..7).collect(),
            (6..9).collect(),
            (8..11).collect(),
        ];
        let part = EdgePartition::new(&g, &sets).unwrap();
        let loc = LocalizedMatrices::new(&g, &part, 0).unwrap();
        assert_eq!(loc.m_hat(), 7);
        assert!(LocalizedMatrices::new(&g, &part, 5).is_none());
    }

    #[test]
    fn omega_conjugation_and_orthogonality() {
        let g = GraphTopology::new(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (1, 3)]).unwrap();
        let part = EdgePartition::neighbourhood(&g);
        let s = g.subsystem_matrices();
        for p in 0..part.len() {
            let loc = LocalizedMatrices::new(&g, &part, p).unwrap();
            for (a, &k) in loc.edges.iter().enumerate() {
                let conj = &loc.omega * s.edge_laplacian(k) * loc.omega.transpose();
                let mut expect = DMatrix::zeros(g.ports(), g.ports());
                expect
                    .view_mut((0, 0), (loc.m_hat(), loc.m_hat()))
                    .copy_from(&loc.l_hat[a]);
                assert_eq!(conj, expect);
                for (b, _) in loc.edges.iter().enumerate() {
                    let prod = loc.b_hat[a].dot(&loc.b_hat[b]);
                    assert_eq!(prod, if a == b { 2.0 } else { 0.0 });
                }
            }
        }
    }
}
