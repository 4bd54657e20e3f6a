//! Immutable simple undirected graphs with stable vertex IDs and port numbering.
//!
//! Vertices are `0..n`. Each vertex sees its incident edges through *ports*:
//! port `p` of `v` is the `p`-th entry of its sorted neighbor list. The
//! simulator addresses messages by port, so a node program never needs the
//! neighbor's identity unless it is explicitly exchanged.

mod generate;
mod io;
mod structure;

pub use generate::{generate_graph, GraphModel};
pub use io::{parse_graph, read_graph, write_graph};
pub use structure::{
    all_sparsities, iterated_log2, line_graph, log_star, sparsity, sparsity_with_max_degree,
    square_graph, up_arrow, Sparsity, Tetration,
};

use thiserror::Error;

pub type VertexId = u32;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("invalid generator parameters: {0}")]
    InvalidParams(String),
    #[error("self-loop at vertex {0}")]
    SelfLoop(VertexId),
    #[error("duplicate edge {0}-{1}")]
    DuplicateEdge(VertexId, VertexId),
    #[error("vertex {vertex} out of range for n = {n}")]
    VertexOutOfRange { vertex: u64, n: usize },
    #[error("unknown vertex {0}")]
    UnknownVertex(VertexId),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("i/o error: {0}")]
    Io(String),
}

/// Simple undirected graph in compressed adjacency form.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: Vec<(VertexId, VertexId)>,
    offsets: Vec<usize>,
    neighbors: Vec<VertexId>,
    slot_edge: Vec<u32>,
    reverse: Vec<u32>,
    max_degree: usize,
}

impl Graph {
    /// Builds a graph, rejecting self-loops, duplicates and out-of-range IDs.
    /// Edges may be given in either orientation.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = (VertexId, VertexId)>,
    {
        let mut list = Vec::new();
        for (a, b) in edges {
            for x in [a, b] {
                if x as usize >= n {
                    return Err(GraphError::VertexOutOfRange { vertex: x as u64, n });
                }
            }
            if a == b {
                return Err(GraphError::SelfLoop(a));
            }
            list.push((a.min(b), a.max(b)));
        }
        list.sort_unstable();
        if let Some(w) = list.windows(2).find(|w| w[0] == w[1]) {
            return Err(GraphError::DuplicateEdge(w[0].0, w[0].1));
        }
        Ok(Self::from_sorted_unique(n, list))
    }

    /// `edges` must be sorted, deduplicated, loop-free and oriented `u < v`.
    pub(crate) fn from_sorted_unique(n: usize, edges: Vec<(VertexId, VertexId)>) -> Self {
        let mut degree = vec![0usize; n];
        for &(u, v) in &edges {
            degree[u as usize] += 1;
            degree[v as usize] += 1;
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let total = *offsets.last().unwrap();
        let mut fill = offsets[..n].to_vec();
        let mut neighbors = vec![0; total];
        let mut slot_edge = vec![0u32; total];
        for (idx, &(u, v)) in edges.iter().enumerate() {
            neighbors[fill[u as usize]] = v;
            slot_edge[fill[u as usize]] = idx as u32;
            fill[u as usize] += 1;
            neighbors[fill[v as usize]] = u;
            slot_edge[fill[v as usize]] = idx as u32;
            fill[v as usize] += 1;
        }
        // Sorted (u, v) input yields sorted adjacency: lower neighbors arrive
        // before any edge whose first endpoint is the vertex itself.
        debug_assert!((0..n).all(|v| neighbors[offsets[v]..offsets[v + 1]]
            .windows(2)
            .all(|w| w[0] < w[1])));
        let mut reverse = vec![0u32; total];
        for u in 0..n {
            for slot in offsets[u]..offsets[u + 1] {
                let w = neighbors[slot] as usize;
                let list = &neighbors[offsets[w]..offsets[w + 1]];
                let pos = list
                    .binary_search(&(u as VertexId))
                    .expect("adjacency is symmetric");
                reverse[slot] = (offsets[w] + pos) as u32;
            }
        }
        let max_degree = degree.iter().copied().max().unwrap_or(0);
        Graph {
            n,
            edges,
            offsets,
            neighbors,
            slot_edge,
            reverse,
            max_degree,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.edges.len()
    }

    /// Edges as `(u, v)` with `u < v`, sorted lexicographically. The position
    /// of an edge in this slice is its edge index.
    pub fn edges(&self) -> &[(VertexId, VertexId)] {
        &self.edges
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn degree(&self, v: VertexId) -> usize {
        let v = v as usize;
        self.offsets[v + 1] - self.offsets[v]
    }

    /// Sorted neighbor list; port `p` of `v` leads to `neighbors(v)[p]`.
    pub fn neighbors(&self, v: VertexId) -> &[VertexId] {
        let v = v as usize;
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }

    /// Edge indices incident to `v`, in port order.
    pub fn incident_edges(&self, v: VertexId) -> &[u32] {
        let v = v as usize;
        &self.slot_edge[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn contains(&self, v: VertexId) -> bool {
        (v as usize) < self.n
    }

    pub fn has_edge(&self, u: VertexId, v: VertexId) -> bool {
        self.port_of(u, v).is_some()
    }

    /// Port of `u` that leads to `v`.
    pub fn port_of(&self, u: VertexId, v: VertexId) -> Option<usize> {
        if !self.contains(u) || !self.contains(v) {
            return None;
        }
        self.neighbors(u).binary_search(&v).ok()
    }

    pub fn edge_index(&self, u: VertexId, v: VertexId) -> Option<usize> {
        let p = self.port_of(u, v)?;
        Some(self.incident_edges(u)[p] as usize)
    }

    /// Ports of edge `e = (u, v)` at `u` and at `v`.
    pub fn edge_ports(&self, e: usize) -> (usize, usize) {
        let (u, v) = self.edges[e];
        (
            self.port_of(u, v).expect("edge exists"),
            self.port_of(v, u).expect("edge exists"),
        )
    }

    /// Offsets into the flat directed-slot space: slots of `v` are
    /// `offsets()[v]..offsets()[v + 1]`.
    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    /// For a directed slot `(u, p)`, the slot of the same edge seen from the
    /// other endpoint.
    pub fn reverse_slot(&self, slot: usize) -> usize {
        self.reverse[slot] as usize
    }

    pub fn directed_slots(&self) -> usize {
        self.neighbors.len()
    }

    /// Subgraph on the same vertex set keeping only edges selected by `keep`.
    pub fn edge_subgraph(&self, mut keep: impl FnMut(usize) -> bool) -> Graph {
        let edges = self
            .edges
            .iter()
            .enumerate()
            .filter(|(i, _)| keep(*i))
            .map(|(_, &e)| e)
            .collect();
        Graph::from_sorted_unique(self.n, edges)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_invalid_edges() {
        assert_eq!(
            Graph::from_edges(3, [(1, 1)]).unwrap_err(),
            GraphError::SelfLoop(1)
        );
        assert_eq!(
            Graph::from_edges(3, [(0, 1), (1, 0)]).unwrap_err(),
            GraphError::DuplicateEdge(0, 1)
        );
        assert!(matches!(
            Graph::from_edges(3, [(0, 3)]),
            Err(GraphError::VertexOutOfRange { vertex: 3, n: 3 })
        ));
    }

    #[test]
    fn ports_and_reverse_slots_agree() {
        let g = Graph::from_edges(5, [(0, 1), (1, 2), (2, 0), (3, 1), (4, 0)]).unwrap();
        assert_eq!(g.neighbors(1), &[0, 2, 3]);
        assert_eq!(g.max_degree(), 3);
        for u in 0..g.n() as u32 {
            for (p, &w) in g.neighbors(u).iter().enumerate() {
                let slot = g.offsets()[u as usize] + p;
                let back = g.reverse_slot(slot);
                let q = back - g.offsets()[w as usize];
                assert_eq!(g.neighbors(w)[q], u);
                assert_eq!(g.incident_edges(u)[p], g.incident_edges(w)[q]);
            }
        }
        for e in 0..g.m() {
            let (u, v) = g.edges()[e];
            let (pu, pv) = g.edge_ports(e);
            assert_eq!(g.neighbors(u)[pu], v);
            assert_eq!(g.neighbors(v)[pv], u);
        }
    }
}
