use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Graph, GraphError, VertexId};

/// Test and benchmark instance families.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum GraphModel {
    Gnp { n: usize, p: f64 },
    RandomRegular { n: usize, d: usize },
    /// G(n, p) with one edge of every triangle removed until none remain.
    /// A heuristic instance source, not a uniform triangle-free sample.
    TriangleFree { n: usize, p: f64 },
    Clique { n: usize },
    Path { n: usize },
    Cycle { n: usize },
}

impl GraphModel {
    pub fn name(&self) -> &'static str {
        match self {
            GraphModel::Gnp { .. } => "gnp",
            GraphModel::RandomRegular { .. } => "random_regular",
            GraphModel::TriangleFree { .. } => "triangle_free",
            GraphModel::Clique { .. } => "clique",
            GraphModel::Path { .. } => "path",
            GraphModel::Cycle { .. } => "cycle",
        }
    }

    pub fn n(&self) -> usize {
        match *self {
            GraphModel::Gnp { n, .. }
            | GraphModel::RandomRegular { n, .. }
            | GraphModel::TriangleFree { n, .. }
            | GraphModel::Clique { n }
            | GraphModel::Path { n }
            | GraphModel::Cycle { n } => n,
        }
    }
}

/// Deterministic for a fixed `(model, seed)`.
pub fn generate_graph(model: &GraphModel, seed: u64) -> Result<Graph, GraphError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    check_vertex_count(model)?;
    let edges = match *model {
        GraphModel::Gnp { n, p } => {
            check_probability(p)?;
            gnp_edges(n, p, &mut rng)
        }
        GraphModel::TriangleFree { n, p } => {
            check_probability(p)?;
            remove_triangles(n, gnp_edges(n, p, &mut rng))
        }
        GraphModel::RandomRegular { n, d } => random_regular_edges(n, d, &mut rng)?,
        GraphModel::Clique { n } => {
            let n = n as VertexId;
            (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect()
        }
        GraphModel::Path { n } => (1..n as VertexId).map(|v| (v - 1, v)).collect(),
        GraphModel::Cycle { n } => {
            if n < 3 {
                return Err(GraphError::InvalidParams(format!(
                    "cycle needs n >= 3, got {n}"
                )));
            }
            let mut edges: Vec<_> = (1..n as VertexId).map(|v| (v - 1, v)).collect();
            edges.push((0, n as VertexId - 1));
            edges.sort_unstable();
            edges
        }
    };
    let n = model.n();
    Ok(Graph::from_sorted_unique(n, edges))
}

fn check_vertex_count(model: &GraphModel) -> Result<(), GraphError> {
    let n = model.n();
    if n > u32::MAX as usize {
        return Err(GraphError::InvalidParams(format!("n = {n} exceeds u32 IDs")));
    }
    Ok(())
}

fn check_probability(p: f64) -> Result<(), GraphError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(GraphError::InvalidParams(format!(
            "edge probability {p} outside [0, 1]"
        )));
    }
    Ok(())
}

/// G(n, p) by geometric skipping over the lower triangle of the adjacency
/// matrix; output is sorted by `(u, v)`.
fn gnp_edges(n: usize, p: f64, rng: &mut ChaCha8Rng) -> Vec<(VertexId, VertexId)> {
    let mut edges = Vec::new();
    if n < 2 || p <= 0.0 {
        return edges;
    }
    if p >= 1.0 {
        let n = n as VertexId;
        return (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect();
    }
    let log_q = (1.0 - p).ln();
    // Walk pairs (v, w) with w < v, row by row.
    let mut v: i64 = 1;
    let mut w: i64 = -1;
    while (v as usize) < n {
        let r: f64 = rng.gen::<f64>();
        let skip = ((1.0 - r).ln() / log_q).floor() as i64;
        w += 1 + skip;
        while w >= v && (v as usize) < n {
            w -= v;
            v += 1;
        }
        if (v as usize) < n {
            edges.push((w as VertexId, v as VertexId));
        }
    }
    edges.sort_unstable();
    edges
}

fn remove_triangles(n: usize, edges: Vec<(VertexId, VertexId)>) -> Vec<(VertexId, VertexId)> {
    let mut adj: Vec<HashSet<VertexId>> = vec![HashSet::new(); n];
    for &(u, v) in &edges {
        adj[u as usize].insert(v);
        adj[v as usize].insert(u);
    }
    loop {
        let mut removed = false;
        for &(u, v) in &edges {
            let (a, b) = (u as usize, v as usize);
            if !adj[a].contains(&v) {
                continue;
            }
            let (small, large) = if adj[a].len() <= adj[b].len() {
                (a, b)
            } else {
                (b, a)
            };
            if adj[small].iter().any(|w| adj[large].contains(w)) {
                adj[a].remove(&v);
                adj[b].remove(&u);
                removed = true;
            }
        }
        if !removed {
            break;
        }
    }
    edges
        .into_iter()
        .filter(|&(u, v)| adj[u as usize].contains(&v))
        .collect()
}

/// Configuration-model pairing followed by random double-edge switches that
/// remove every self-loop and parallel edge.
fn random_regular_edges(
    n: usize,
    d: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(VertexId, VertexId)>, GraphError> {
    if d >= n && !(n == 0 && d == 0) {
        return Err(GraphError::InvalidParams(format!(
            "regular degree {d} must be below n = {n}"
        )));
    }
    if !(n * d).is_multiple_of(2) {
        return Err(GraphError::InvalidParams(format!(
            "n * d must be even, got n = {n}, d = {d}"
        )));
    }
    if d == 0 {
        return Ok(Vec::new());
    }
    if d == n - 1 {
        let n = n as VertexId;
        return Ok((0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect());
    }
    let mut stubs: Vec<VertexId> = (0..n as VertexId)
        .flat_map(|v| std::iter::repeat_n(v, d))
        .collect();
    stubs.shuffle(rng);
    let norm = |a: VertexId, b: VertexId| (a.min(b), a.max(b));
    let mut edges: Vec<(VertexId, VertexId)> = stubs
        .chunks_exact(2)
        .map(|c| norm(c[0], c[1]))
        .collect();
    let mut count: HashMap<(VertexId, VertexId), u32> = HashMap::with_capacity(edges.len());
    for &e in &edges {
        *count.entry(e).or_default() += 1;
    }
    let is_bad = |e: (VertexId, VertexId), count: &HashMap<_, u32>| e.0 == e.1 || count[&e] > 1;
    let m = edges.len();
    let mut budget = 1000 * m + 10_000;
    loop {
        let bad: Vec<usize> = (0..m).filter(|&i| is_bad(edges[i], &count)).collect();
        if bad.is_empty() {
            break;
        }
        for i in bad {
            while is_bad(edges[i], &count) {
                if budget == 0 {
                    return Err(GraphError::InvalidParams(format!(
                        "could not realise a simple {d}-regular graph on {n} vertices"
                    )));
                }
                budget -= 1;
                let j = rng.gen_range(0..m);
                if j == i {
                    continue;
                }
                let (a, b) = edges[i];
                let (mut c, mut dd) = edges[j];
                if rng.gen::<bool>() {
                    std::mem::swap(&mut c, &mut dd);
                }
                let e1 = norm(a, c);
                let e2 = norm(b, dd);
                if e1.0 == e1.1 || e2.0 == e2.1 || e1 == e2 {
                    continue;
                }
                if count.get(&e1).copied().unwrap_or(0) > 0 || count.get(&e2).copied().unwrap_or(0) > 0
                {
                    continue;
                }
                for old in [edges[i], edges[j]] {
                    let c = count.get_mut(&old).unwrap();
                    *c -= 1;
                    if *c == 0 {
                        count.remove(&old);
                    }
                }
                *count.entry(e1).or_default() += 1;
                *count.entry(e2).or_default() += 1;
                edges[i] = e1;
                edges[j] = e2;
            }
        }
    }
    edges.sort_unstable();
    Ok(edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cycle_of_five() {
        let g = generate_graph(&GraphModel::Cycle { n: 5 }, 0).unwrap();
        assert_eq!((g.n(), g.m(), g.max_degree()), (5, 5, 2));
    }

    #[test]
    fn clique_of_four() {
        let g = generate_graph(&GraphModel::Clique { n: 4 }, 0).unwrap();
        assert_eq!((g.m(), g.max_degree()), (6, 3));
    }

    #[test]
    fn random_regular_degree_scan() {
        let g = generate_graph(&GraphModel::RandomRegular { n: 1000, d: 32 }, 7).unwrap();
        assert!((0..1000).all(|v| g.degree(v) == 32));
        assert_eq!(g.m(), 16_000);
    }

    #[test]
    fn random_regular_rejects_infeasible() {
        assert!(generate_graph(&GraphModel::RandomRegular { n: 10, d: 10 }, 0).is_err());
        assert!(generate_graph(&GraphModel::RandomRegular { n: 9, d: 3 }, 0).is_err());
        assert!(generate_graph(&GraphModel::Cycle { n: 2 }, 0).is_err());
        assert!(generate_graph(&GraphModel::Gnp { n: 5, p: 1.5 }, 0).is_err());
    }

    #[test]
    fn deterministic_per_seed() {
        let m = GraphModel::Gnp { n: 300, p: 0.05 };
        assert_eq!(generate_graph(&m, 3).unwrap(), generate_graph(&m, 3).unwrap());
        assert_ne!(generate_graph(&m, 3).unwrap(), generate_graph(&m, 4).unwrap());
    }

    #[test]
    fn gnp_edge_count_is_plausible() {
        let g = generate_graph(&GraphModel::Gnp { n: 2000, p: 0.01 }, 1).unwrap();
        let expected: f64 = 0.01 * 2000.0 * 1999.0 / 2.0;
        let sd = (expected * 0.99).sqrt();
        assert!((g.m() as f64 - expected).abs() < 5.0 * sd, "m = {}", g.m());
    }

    #[test]
    fn triangle_free_has_no_triangles() {
        let g = generate_graph(&GraphModel::TriangleFree { n: 400, p: 0.08 }, 5).unwrap();
        for &(u, v) in g.edges() {
            let nu = g.neighbors(u);
            assert!(g.neighbors(v).iter().all(|w| nu.binary_search(w).is_err()));
        }
        assert!(g.m() > 0);
    }
}
