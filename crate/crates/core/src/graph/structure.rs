use num_rational::Ratio;
use rayon::prelude::*;

use super::{Graph, GraphError, VertexId};

/// Normalised count of missing edges in a neighborhood, kept as an exact
/// rational.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Sparsity(pub Ratio<u64>);

impl Sparsity {
    pub fn value(&self) -> Ratio<u64> {
        self.0
    }

    pub fn as_f64(&self) -> f64 {
        *self.0.numer() as f64 / *self.0.denom() as f64
    }
}

/// `(1/Δ)·(C(Δ,2) − |E[N(v)]|)` with the graph's global Δ.
pub fn sparsity(g: &Graph, v: VertexId) -> Result<Sparsity, GraphError> {
    sparsity_with_max_degree(g, v, g.max_degree())
}

/// Sparsity against an externally known degree bound `delta >= Δ(g)`, e.g.
/// `2(Δ − 1)` for the line graph of a graph of maximum degree Δ.
pub fn sparsity_with_max_degree(
    g: &Graph,
    v: VertexId,
    delta: usize,
) -> Result<Sparsity, GraphError> {
    if !g.contains(v) {
        return Err(GraphError::UnknownVertex(v));
    }
    if delta < g.max_degree() {
        return Err(GraphError::InvalidParams(format!(
            "degree bound {delta} below the graph's maximum degree {}",
            g.max_degree()
        )));
    }
    let delta = delta as u64;
    if delta == 0 {
        return Ok(Sparsity(Ratio::from_integer(0)));
    }
    let inner = neighborhood_edges(g, v);
    let pairs = delta * (delta - 1) / 2;
    Ok(Sparsity(Ratio::new(pairs - inner, delta)))
}

/// `|E[N(v)]|`: edges with both endpoints in the open neighborhood of `v`.
fn neighborhood_edges(g: &Graph, v: VertexId) -> u64 {
    let nv = g.neighbors(v);
    let mut count = 0u64;
    for &u in nv {
        let nu = g.neighbors(u);
        // Sorted-merge intersection, counting only w > u.
        let (mut i, mut j) = (0, 0);
        while i < nv.len() && j < nu.len() {
            match nv[i].cmp(&nu[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    if nv[i] > u {
                        count += 1;
                    }
                    i += 1;
                    j += 1;
                }
            }
        }
    }
    count
}

/// Sparsity of every vertex, computed in parallel.
pub fn all_sparsities(g: &Graph, delta: usize) -> Result<Vec<Sparsity>, GraphError> {
    (0..g.n() as VertexId)
        .into_par_iter()
        .map(|v| sparsity_with_max_degree(g, v, delta))
        .collect()
}

/// One vertex per edge of `g` (same indexing as `g.edges()`); two are
/// adjacent iff the edges share an endpoint.
pub fn line_graph(g: &Graph) -> Graph {
    let mut edges: Vec<(VertexId, VertexId)> = Vec::new();
    for v in 0..g.n() as VertexId {
        let inc = g.incident_edges(v);
        for (i, &a) in inc.iter().enumerate() {
            for &b in &inc[i + 1..] {
                edges.push((a.min(b), a.max(b)));
            }
        }
    }
    // A simple graph has no two edges sharing both endpoints, so every pair
    // is produced exactly once.
    edges.sort_unstable();
    Graph::from_sorted_unique(g.m(), edges)
}

/// `u ~ v` iff `1 <= dist(u, v) <= 2` in `g`.
pub fn square_graph(g: &Graph) -> Graph {
    let n = g.n();
    let lists: Vec<Vec<VertexId>> = (0..n as VertexId)
        .into_par_iter()
        .map(|v| {
            let mut out: Vec<VertexId> = Vec::new();
            for &u in g.neighbors(v) {
                if u > v {
                    out.push(u);
                }
                for &w in g.neighbors(u) {
                    if w > v {
                        out.push(w);
                    }
                }
            }
            out.sort_unstable();
            out.dedup();
            out
        })
        .collect();
    let edges = lists
        .into_iter()
        .enumerate()
        .flat_map(|(v, l)| l.into_iter().map(move |w| (v as VertexId, w)))
        .collect();
    Graph::from_sorted_unique(n, edges)
}

/// Result of a capped tetration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Tetration {
    pub value: u64,
    pub saturated: bool,
}

/// `a↑↑b`, saturating at `cap` (the returned value is then `cap`).
pub fn up_arrow(a: u64, b: u32, cap: u64) -> Tetration {
    assert!(a >= 2, "tetration base must be at least 2");
    let mut value: u64 = 1;
    for _ in 0..b {
        let next = u32::try_from(value)
            .ok()
            .and_then(|e| a.checked_pow(e))
            .filter(|&v| v <= cap);
        match next {
            Some(v) => value = v,
            None => {
                return Tetration {
                    value: cap,
                    saturated: true,
                }
            }
        }
    }
    if value > cap {
        return Tetration {
            value: cap,
            saturated: true,
        };
    }
    Tetration {
        value,
        saturated: false,
    }
}

/// Number of times `log2` must be applied to `n` before the result is at
/// most 1.
pub fn log_star(n: f64) -> u32 {
    let mut x = n;
    let mut k = 0;
    while x > 1.0 {
        x = x.log2();
        k += 1;
    }
    k
}

/// `log2` applied `c` times; values below 1 are clamped to 1 before each
/// application so the result stays finite.
pub fn iterated_log2(n: f64, c: u32) -> f64 {
    let mut x = n;
    for _ in 0..c {
        x = x.max(1.0).log2();
    }
    x
}
