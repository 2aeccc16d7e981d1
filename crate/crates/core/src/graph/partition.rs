use std::collections::BTreeMap;

use num_rational::Rational64;
use thiserror::Error;

use super::GraphTopology;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PartitionError {
    #[error("partition has no elements")]
    NoElements,
    #[error("element {0} is empty")]
    EmptyElement(usize),
    #[error("element {element} references edge {edge}, but the graph has {m} edges")]
    BadEdgeId { element: usize, edge: usize, m: usize },
    #[error("element {0} does not induce a connected sub-graph")]
    NotConnected(usize),
    #[error("edges {0:?} are not covered by any element")]
    NotCovering(Vec<usize>),
    #[error("edge {edge}: adjacent edges {uncovered:?} are not covered by the elements containing it")]
    NeighbourhoodUncovered { edge: usize, uncovered: Vec<usize> },
}

/// Outcome of checking a candidate partition; lists every violation found.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Admissibility {
    pub violations: Vec<PartitionError>,
}

impl Admissibility {
    pub fn is_admissible(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Localized edge partition together with its derived index sets.
///
/// Indices are 0-based: elements `p`, vertices `i`, edges `k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgePartition {
    sets: Vec<Vec<usize>>,
    vertex_sets: Vec<Vec<usize>>,
    elements_of_vertex: Vec<Vec<usize>>,
    elements_of_edge: Vec<Vec<usize>>,
    adjacent: Vec<Vec<usize>>,
    shared: BTreeMap<(usize, usize), Vec<usize>>,
}

impl EdgePartition {
    /// Validates `sets` against `g` and derives all index sets.
    ///
    /// Fails with the first violation in the order: empty element, bad
    /// edge id, disconnected element, incomplete cover, uncovered neighbourhood.
    pub fn new(g: &GraphTopology, sets: &[Vec<usize>]) -> Result<Self, PartitionError> {
        match Self::check(g, sets).violations.into_iter().next() {
            Some(err) => Err(err),
            None => Ok(Self::derive(g, sets)),
        }
    }

    /// Collects every admissibility violation of `sets`.
    pub fn check(g: &GraphTopology, sets: &[Vec<usize>]) -> Admissibility {
        let mut violations = Vec::new();
        if sets.is_empty() {
            violations.push(PartitionError::NoElements);
            return Admissibility { violations };
        }
        let m = g.m();
        let mut structurally_ok = true;
        for (p, set) in sets.iter().enumerate() {
            if set.is_empty() {
                violations.push(PartitionError::EmptyElement(p));
                structurally_ok = false;
            }
            if let Some(&edge) = set.iter().find(|&&k| k >= m) {
                violations.push(PartitionError::BadEdgeId { element: p, edge, m });
                structurally_ok = false;
            }
        }
        if !structurally_ok {
            return Admissibility { violations };
        }
        for (p, set) in sets.iter().enumerate() {
            if !g.edges_connected(set) {
                violations.push(PartitionError::NotConnected(p));
            }
        }
        let mut covered = vec![false; m];
        for &k in sets.iter().flatten() {
            covered[k] = true;
        }
        let missing: Vec<usize> = (0..m).filter(|&k| !covered[k]).collect();
        if !missing.is_empty() {
            violations.push(PartitionError::NotCovering(missing));
            return Admissibility { violations };
        }
        for k in 0..m {
            let mut union = std::collections::BTreeSet::new();
            for set in sets.iter().filter(|s| s.contains(&k)) {
                union.extend(set.iter().copied().filter(|&l| l != k));
            }
            let uncovered: Vec<usize> = g
                .adjacent_edges(k)
                .into_iter()
                .filter(|l| !union.contains(l))
                .collect();
            if !uncovered.is_empty() {
                violations.push(PartitionError::NeighbourhoodUncovered { edge: k, uncovered });
            }
        }
        Admissibility { violations }
    }

    fn derive(g: &GraphTopology, sets: &[Vec<usize>]) -> Self {
        let sets: Vec<Vec<usize>> = sets
            .iter()
            .map(|s| {
                let mut s = s.clone();
                s.sort_unstable();
                s.dedup();
                s
            })
            .collect();
        let vertex_sets: Vec<Vec<usize>> = sets.iter().map(|s| g.edge_vertices(s)).collect();
        let mut elements_of_vertex = vec![Vec::new(); g.n()];
        for (p, verts) in vertex_sets.iter().enumerate() {
            for &i in verts {
                elements_of_vertex[i].push(p);
            }
        }
        let mut elements_of_edge = vec![Vec::new(); g.m()];
        for (p, set) in sets.iter().enumerate() {
            for &k in set {
                elements_of_edge[k].push(p);
            }
        }
        let adjacent: Vec<Vec<usize>> = (0..g.m()).map(|k| g.adjacent_edges(k)).collect();
        let mut shared = BTreeMap::new();
        for k in 0..g.m() {
            for &l in &adjacent[k] {
                let q: Vec<usize> = elements_of_edge[k]
                    .iter()
                    .copied()
                    .filter(|&p| sets[p].binary_search(&l).is_ok())
                    .collect();
                shared.insert((k, l), q);
            }
        }
        Self {
            sets,
            vertex_sets,
            elements_of_vertex,
            elements_of_edge,
            adjacent,
            shared,
        }
    }

    /// Single element holding every edge.
    pub fn whole(g: &GraphTopology) -> Self {
        Self::derive(g, &[(0..g.m()).collect()])
    }

    /// One element per vertex: its neighbourhood edge set.
    pub fn neighbourhood(g: &GraphTopology) -> Self {
        let sets: Vec<Vec<usize>> = (0..g.n()).map(|i| g.incident_edges(i).to_vec()).collect();
        Self::derive(g, &sets)
    }

    /// Number of elements `c`.
    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    /// Edge ids of element `p` (ascending).
    pub fn edges(&self, p: usize) -> &[usize] {
        &self.sets[p]
    }

    pub fn sets(&self) -> &[Vec<usize>] {
        &self.sets
    }

    /// Naturally ordered vertex set of element `p`.
    pub fn vertices(&self, p: usize) -> &[usize] {
        &self.vertex_sets[p]
    }

    /// Elements whose vertex set contains `i`.
    pub fn elements_of_vertex(&self, i: usize) -> &[usize] {
        &self.elements_of_vertex[i]
    }

    /// Elements containing edge `k`.
    pub fn elements_of_edge(&self, k: usize) -> &[usize] {
        &self.elements_of_edge[k]
    }

    /// Edges adjacent to `k`, excluding `k`.
    pub fn adjacent(&self, k: usize) -> &[usize] {
        &self.adjacent[k]
    }

    /// Elements containing both `k` and `l`, for `l` adjacent to `k`.
    pub fn shared(&self, k: usize, l: usize) -> &[usize] {
        self.shared.get(&(k, l)).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Vertex weight `ω_i = ξ_i = 1/|J_i|`.
    pub fn omega(&self, i: usize) -> Rational64 {
        unit_fraction(self.elements_of_vertex[i].len())
    }

    pub fn xi(&self, i: usize) -> Rational64 {
        self.omega(i)
    }

    /// Edge weight `η_k = ζ_k = 1/|O_k|`.
    pub fn eta(&self, k: usize) -> Rational64 {
        unit_fraction(self.elements_of_edge[k].len())
    }

    pub fn zeta(&self, k: usize) -> Rational64 {
        self.eta(k)
    }

    /// Pair weight `θ_{k,l} = 1/|Q_{k,l}|`.
    pub fn theta(&self, k: usize, l: usize) -> Rational64 {
        unit_fraction(self.shared(k, l).len())
    }

    /// Edges `l` in element `p` that are adjacent to `k`.
    pub fn adjacent_within(&self, p: usize, k: usize) -> Vec<usize> {
        self.adjacent[k]
            .iter()
            .copied()
            .filter(|l| self.sets[p].binary_search(l).is_ok())
            .collect()
    }
}

fn unit_fraction(count: usize) -> Rational64 {
    assert!(count > 0, "weight of an uncovered index");
    Rational64::new(1, count as i64)
}

pub(crate) fn to_f64(r: Rational64) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neighbourhood_partition_of_path3() {
        let g = GraphTopology::path(3).unwrap();
        let part = EdgePartition::new(&g, &[vec![0], vec![0, 1], vec![1]]).unwrap();
        assert_eq!(part.elements_of_vertex(0), &[0, 1]);
        assert_eq!(part.omega(0), Rational64::new(1, 2));
        assert_eq!(part.elements_of_edge(0), &[0, 1]);
        assert_eq!(part.eta(0), Rational64::new(1, 2));
        assert_eq!(part.vertices(1), &[0, 1, 2]);
        assert_eq!(part.omega(1), Rational64::new(1, 3));
        assert_eq!(part.shared(0, 1), &[1]);
        assert_eq!(part.theta(0, 1), Rational64::new(1, 1));
    }

    #[test]
    fn whole_graph_weights_are_one() {
        let g = GraphTopology::new(4, &[(0, 1), (0, 2), (0, 3), (2, 3)]).unwrap();
        let part = EdgePartition::whole(&g);
        let one = Rational64::from_integer(1);
        for i in 0..4 {
            assert_eq!(part.omega(i), one);
        }
        for k in 0..4 {
            assert_eq!(part.eta(k), one);
            for &l in part.adjacent(k) {
                assert_eq!(part.theta(k, l), one);
            }
        }
    }

    #[test]
    fn table_three_partition_of_twelve_path() {
        let g = GraphTopology::path(12).unwrap();
        let sets = vec![(0..5).collect(), (3..8).collect(), (6..11).collect()];
        let part = EdgePartition::new(&g, &sets).unwrap();
        assert_eq!(part.vertices(1).len(), 6);
    }

    #[test]
    fn reports_violations() {
        let g = GraphTopology::path(4).unwrap();
        assert_eq!(
            EdgePartition::new(&g, &[vec![0, 1, 2], vec![]]),
            Err(PartitionError::EmptyElement(1))
        );
        assert_eq!(
            EdgePartition::new(&g, &[vec![0, 1, 7]]),
            Err(PartitionError::BadEdgeId { element: 0, edge: 7, m: 3 })
        );
        assert_eq!(
            EdgePartition::new(&g, &[vec![0, 2], vec![1]]),
            Err(PartitionError::NotConnected(0))
        );
        assert_eq!(
            EdgePartition::new(&g, &[vec![0, 1]]),
            Err(PartitionError::NotCovering(vec![2]))
        );
        // link-wise partition: no element pairs an edge with its neighbours
        assert_eq!(
            EdgePartition::new(&g, &[vec![0], vec![1], vec![2]]),
            Err(PartitionError::NeighbourhoodUncovered { edge: 0, uncovered: vec![1] })
        );
        let report = EdgePartition::check(&g, &[vec![0], vec![1], vec![2]]);
        assert_eq!(report.violations.len(), 3);
    }

    #[test]
    fn pairwise_partition_is_admissible() {
        let g = GraphTopology::path(12).unwrap();
        let sets: Vec<Vec<usize>> = (0..10).map(|p| vec![p, p + 1]).collect();
        assert!(EdgePartition::check(&g, &sets).is_admissible());
    }
}
