//! Network graph, its enumerations, and the sub-system graph matrices.
//!
//! Vertices and edges are 0-based throughout the library. The model file
//! uses 1-based ids and is translated at the parsing boundary.
//!
//! The sub-system graph has one vertex per (agent, link) port. Port `k` of
//! agent `i` sits at row `offset(i) + k`, where the ports of each agent are
//! ordered by the neighbour enumeration (ascending neighbour id).

mod localized;
mod partition;
mod subsystem;

pub use localized::LocalizedMatrices;
pub use partition::{Admissibility, EdgePartition, PartitionError};
pub(crate) use partition::to_f64;
pub use subsystem::SubsystemMatrices;

use std::collections::{BTreeSet, VecDeque};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("a network needs at least 2 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("edge {edge} references vertex {vertex}, outside [0, {n})")]
    VertexOutOfRange { edge: usize, vertex: usize, n: usize },
    #[error("edge {edge} is a self-loop on vertex {vertex}")]
    SelfLoop { edge: usize, vertex: usize },
    #[error("edge {edge} duplicates edge {first} ({i}, {j})")]
    DuplicateEdge {
        edge: usize,
        first: usize,
        i: usize,
        j: usize,
    },
    #[error("graph is disconnected: vertex {0} is unreachable from vertex 0")]
    Disconnected(usize),
}

/// Simple connected undirected graph with fixed edge and neighbour enumerations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphTopology {
    n: usize,
    /// Edge endpoints as `(min, max)`, in enumeration order.
    edges: Vec<(usize, usize)>,
    /// Neighbours of each vertex in ascending order.
    neighbours: Vec<Vec<usize>>,
    /// Edge ids incident to each vertex, aligned with `neighbours`.
    incident: Vec<Vec<usize>>,
    /// `offsets[i]` is the first sub-system row of vertex `i`; `offsets[n] = 2m`.
    offsets: Vec<usize>,
}

impl GraphTopology {
    /// Builds a topology from `n` vertices and an ordered edge list.
    ///
    /// The edge enumeration follows the input order; each neighbour
    /// enumeration is ascending in vertex id.
    pub fn new(n: usize, edge_list: &[(usize, usize)]) -> Result<Self, GraphError> {
        if n < 2 {
            return Err(GraphError::TooFewVertices(n));
        }
        let mut edges = Vec::with_capacity(edge_list.len());
        let mut seen = std::collections::HashMap::new();
        for (e, &(a, b)) in edge_list.iter().enumerate() {
            for v in [a, b] {
                if v >= n {
                    return Err(GraphError::VertexOutOfRange { edge: e, vertex: v, n });
                }
            }
            if a == b {
                return Err(GraphError::SelfLoop { edge: e, vertex: a });
            }
            let key = (a.min(b), a.max(b));
            if let Some(&first) = seen.get(&key) {
                return Err(GraphError::DuplicateEdge {
                    edge: e,
                    first,
                    i: key.0,
                    j: key.1,
                });
            }
            seen.insert(key, e);
            edges.push(key);
        }

        let mut adj: Vec<BTreeSet<(usize, usize)>> = vec![BTreeSet::new(); n];
        for (e, &(i, j)) in edges.iter().enumerate() {
            adj[i].insert((j, e));
            adj[j].insert((i, e));
        }
        let neighbours: Vec<Vec<usize>> = adj
            .iter()
            .map(|s| s.iter().map(|&(j, _)| j).collect())
            .collect();
        let incident: Vec<Vec<usize>> = adj
            .iter()
            .map(|s| s.iter().map(|&(_, e)| e).collect())
            .collect();

        let mut visited = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        visited[0] = true;
        while let Some(v) = queue.pop_front() {
            for &w in &neighbours[v] {
                if !visited[w] {
                    visited[w] = true;
                    queue.push_back(w);
                }
            }
        }
        if let Some(v) = visited.iter().position(|&x| !x) {
            return Err(GraphError::Disconnected(v));
        }

        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for nb in &neighbours {
            offsets.push(offsets.last().unwrap() + nb.len());
        }

        Ok(Self {
            n,
            edges,
            neighbours,
            incident,
            offsets,
        })
    }

    /// Path graph `0 - 1 - ... - (n-1)` with edges in path order.
    pub fn path(n: usize) -> Result<Self, GraphError> {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Self::new(n, &edges)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of edges.
    pub fn m(&self) -> usize {
        self.edges.len()
    }

    /// Number of sub-system vertices, `2m`.
    pub fn ports(&self) -> usize {
        2 * self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Endpoints `(min, max)` of edge `k`.
    pub fn edge(&self, k: usize) -> (usize, usize) {
        self.edges[k]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbours[i].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.neighbours.iter().map(Vec::len).collect()
    }

    pub fn neighbours(&self, i: usize) -> &[usize] {
        &self.neighbours[i]
    }

    /// Edge ids incident to `i`, ordered by the neighbour enumeration.
    pub fn incident_edges(&self, i: usize) -> &[usize] {
        &self.incident[i]
    }

    /// First sub-system row of vertex `i` (the running degree sum before `i`).
    pub fn offset(&self, i: usize) -> usize {
        self.offsets[i]
    }

    /// Sub-system row range of vertex `i`.
    pub fn port_range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    /// Local index of neighbour `j` in the enumeration of vertex `i`.
    pub fn neighbour_index(&self, i: usize, j: usize) -> Option<usize> {
        self.neighbours[i].binary_search(&j).ok()
    }

    /// Sub-system row of the port through which `i` receives from `j`.
    pub fn port(&self, i: usize, j: usize) -> Option<usize> {
        self.neighbour_index(i, j).map(|k| self.offsets[i] + k)
    }

    /// Vertex owning sub-system row `r`.
    pub fn port_owner(&self, r: usize) -> usize {
        match self.offsets.binary_search(&r) {
            Ok(mut i) => {
                // skip zero-degree entries; cannot occur for connected graphs but keeps the lookup total
                while self.offsets[i + 1] == r {
                    i += 1;
                }
                i
            }
            Err(i) => i - 1,
        }
    }

    /// Edge ids sharing an endpoint with edge `k`, excluding `k`, ascending.
    pub fn adjacent_edges(&self, k: usize) -> Vec<usize> {
        let (i, j) = self.edges[k];
        let mut out: BTreeSet<usize> = self.incident[i].iter().copied().collect();
        out.extend(self.incident[j].iter().copied());
        out.remove(&k);
        out.into_iter().collect()
    }

    /// Vertices touched by the given edges, ascending.
    pub fn edge_vertices(&self, edge_ids: &[usize]) -> Vec<usize> {
        let mut set = BTreeSet::new();
        for &k in edge_ids {
            let (i, j) = self.edges[k];
            set.insert(i);
            set.insert(j);
        }
        set.into_iter().collect()
    }

    /// Whether the edge-induced sub-graph on `edge_ids` is connected.
    pub fn edges_connected(&self, edge_ids: &[usize]) -> bool {
        if edge_ids.is_empty() {
            return false;
        }
        let verts = self.edge_vertices(edge_ids);
        let mut adj: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for &k in edge_ids {
            let (i, j) = self.edges[k];
            adj.entry(i).or_default().push(j);
            adj.entry(j).or_default().push(i);
        }
        let mut seen = BTreeSet::from([verts[0]]);
        let mut queue = VecDeque::from([verts[0]]);
        while let Some(v) = queue.pop_front() {
            for &w in &adj[&v] {
                if seen.insert(w) {
                    queue.push_back(w);
                }
            }
        }
        seen.len() == verts.len()
    }

    /// Same graph with vertex `v` renamed to `perm[v]`; edge order is preserved.
    pub fn relabel(&self, perm: &[usize]) -> Result<Self, GraphError> {
        let edges: Vec<_> = self
            .edges
            .iter()
            .map(|&(i, j)| (perm[i], perm[j]))
            .collect();
        Self::new(self.n, &edges)
    }

    pub fn subsystem_matrices(&self) -> SubsystemMatrices {
        SubsystemMatrices::new(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_edge() {
        let g = GraphTopology::new(2, &[(0, 1)]).unwrap();
        assert_eq!(g.m(), 1);
        assert_eq!(g.degrees(), vec![1, 1]);
        assert_eq!(g.offset(1), 1);
        assert_eq!(g.offset(2), 2);
    }

    #[test]
    fn star_with_chord() {
        let g = GraphTopology::new(4, &[(0, 1), (0, 2), (0, 3), (2, 3)]).unwrap();
        assert_eq!(g.m(), 4);
        assert_eq!(g.degrees(), vec![3, 1, 2, 2]);
        assert_eq!(g.neighbours(0), &[1, 2, 3]);
        assert_eq!(g.incident_edges(3), &[2, 3]);
        assert_eq!(g.adjacent_edges(3), vec![1, 2]);
    }

    #[test]
    fn twelve_agent_path() {
        let g = GraphTopology::path(12).unwrap();
        assert_eq!(g.m(), 11);
        assert_eq!(g.ports(), 22);
        let d = g.degrees();
        assert_eq!(d[0], 1);
        assert_eq!(d[11], 1);
        assert!(d[1..11].iter().all(|&x| x == 2));
    }

    #[test]
    fn rejects_malformed_graphs() {
        assert_eq!(
            GraphTopology::new(1, &[]).unwrap_err(),
            GraphError::TooFewVertices(1)
        );
        assert!(matches!(
            GraphTopology::new(3, &[(0, 0), (1, 2)]),
            Err(GraphError::SelfLoop { edge: 0, vertex: 0 })
        ));
        assert!(matches!(
            GraphTopology::new(3, &[(0, 1), (1, 2), (2, 1)]),
            Err(GraphError::DuplicateEdge { edge: 2, first: 1, .. })
        ));
        assert!(matches!(
            GraphTopology::new(4, &[(0, 1), (2, 3)]),
            Err(GraphError::Disconnected(2))
        ));
        assert!(matches!(
            GraphTopology::new(3, &[(0, 3)]),
            Err(GraphError::VertexOutOfRange { vertex: 3, .. })
        ));
    }

    #[test]
    fn port_owner_inverts_offsets() {
        let g = GraphTopology::new(4, &[(0, 1), (0, 2), (0, 3), (2, 3)]).unwrap();
        for i in 0..4 {
            for r in g.port_range(i) {
                assert_eq!(g.port_owner(r), i);
            }
        }
    }

    #[test]
    fn edge_connectivity() {
        let g = GraphTopology::path(5).unwrap();
        assert!(g.edges_connected(&[1, 2]));
        assert!(!g.edges_connected(&[0, 2]));
        assert!(!g.edges_connected(&[]));
    }
}
