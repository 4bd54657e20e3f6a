//! Plain-text graph files: a header line `n m`, then `m` lines `u v` with
//! 0-based IDs and `u < v`.

use std::fmt::Write as _;
use std::path::Path;

use super::{Graph, GraphError, VertexId};

/// Upper bound on `n` accepted from files.
pub const MAX_FILE_VERTICES: usize = 1 << 24;

pub fn parse_graph(text: &str) -> Result<Graph, GraphError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let (hline, header) = lines.next().ok_or(GraphError::Parse {
        line: 1,
        msg: "missing header".into(),
    })?;
    let (n, m) = parse_pair(hline, header)?;
    let n = usize::try_from(n).unwrap_or(usize::MAX);
    if n > MAX_FILE_VERTICES {
        return Err(GraphError::Parse {
            line: hline,
            msg: format!("n = {n} exceeds limit {MAX_FILE_VERTICES}"),
        });
    }
    let max_edges = (n as u64) * (n as u64).saturating_sub(1) / 2;
    if m > max_edges {
        return Err(GraphError::Parse {
            line: hline,
            msg: format!("m = {m} exceeds n(n-1)/2 = {max_edges}"),
        });
    }
    let mut edges = Vec::with_capacity(m.min(1 << 20) as usize);
    for (line, text) in lines {
        let (u, v) = parse_pair(line, text)?;
        if u >= n as u64 || v >= n as u64 {
            return Err(GraphError::VertexOutOfRange {
                vertex: u.max(v),
                n,
            });
        }
        if u == v {
            return Err(GraphError::SelfLoop(u as VertexId));
        }
        if u > v {
            return Err(GraphError::Parse {
                line,
                msg: format!("edge {u} {v} not written with u < v"),
            });
        }
        edges.push((u as VertexId, v as VertexId));
    }
    if edges.len() as u64 != m {
        return Err(GraphError::Parse {
            line: hline,
            msg: format!("header declares {m} edges, found {}", edges.len()),
        });
    }
    Graph::from_edges(n, edges)
}

fn parse_pair(line: usize, text: &str) -> Result<(u64, u64), GraphError> {
    let mut it = text.split_whitespace();
    let mut next = |what: &str| -> Result<u64, GraphError> {
        let tok = it.next().ok_or_else(|| GraphError::Parse {
            line,
            msg: format!("missing {what}"),
        })?;
        tok.parse::<u64>().map_err(|e| GraphError::Parse {
            line,
            msg: format!("bad {what} {tok:?}: {e}"),
        })
    };
    let a = next("first field")?;
    let b = next("second field")?;
    if it.next().is_some() {
        return Err(GraphError::Parse {
            line,
            msg: "trailing fields".into(),
        });
    }
    Ok((a, b))
}

pub fn read_graph(path: impl AsRef<Path>) -> Result<Graph, GraphError> {
    let text = std::fs::read_to_string(path).map_err(|e| GraphError::Io(e.to_string()))?;
    parse_graph(&text)
}

pub fn write_graph(g: &Graph) -> String {
    let mut out = String::with_capacity(16 * (g.m() + 1));
    let _ = writeln!(out, "{} {}", g.n(), g.m());
    for &(u, v) in g.edges() {
        let _ = writeln!(out, "{u} {v}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_graph, GraphModel};
    use proptest::prelude::*;

    #[test]
    fn parses_and_rejects() {
        let g = parse_graph("3 2\n0 1\n1 2\n").unwrap();
        assert_eq!((g.n(), g.m()), (3, 2));
        assert!(matches!(parse_graph("3 1\n1 1\n"), Err(GraphError::SelfLoop(1))));
        assert!(matches!(
            parse_graph("3 2\n0 1\n0 1\n"),
            Err(GraphError::DuplicateEdge(0, 1))
        ));
        assert!(matches!(parse_graph("3 1\n2 1\n"), Err(GraphError::Parse { .. })));
        assert!(matches!(parse_graph("3 2\n0 1\n"), Err(GraphError::Parse { .. })));
        assert!(matches!(
            parse_graph("3 1\n0 5\n"),
            Err(GraphError::VertexOutOfRange { .. })
        ));
        assert!(parse_graph("").is_err());
        assert!(parse_graph("2 5\n").is_err());
        assert!(parse_graph("99999999999 0\n").is_err());
    }

    proptest! {
        #[test]
        fn write_then_parse_is_identity(n in 1usize..60, p in 0.0f64..1.0, seed: u64) {
            let g = generate_graph(&GraphModel::Gnp { n, p }, seed).unwrap();
            prop_assert_eq!(parse_graph(&write_graph(&g)).unwrap(), g);
        }
    }
}
