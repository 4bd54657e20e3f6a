//! Coloring files: one line per colored element, `v c` for vertex and
//! distance-2 colorings, `u v c` for edge colorings. Blank lines and lines
//! starting with `#` are skipped; unlisted elements are uncolored.

use std::fmt::Write as _;

use crate::graph::{Graph, VertexId};

use super::{ColoringKind, HarnessError};

pub fn parse_coloring(g: &Graph, kind: ColoringKind, text: &str) -> Result<Vec<Option<u32>>, HarnessError> {
    let mut out = vec![None; kind.elements(g)];
    let fields = if kind == ColoringKind::Edge { 3 } else { 2 };
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |msg: String| HarnessError::Input(format!("coloring line {}: {msg}", i + 1));
        let nums = line
            .split_whitespace()
            .map(|t| t.parse::<u64>().map_err(|e| bad(format!("{t:?}: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        if nums.len() != fields {
            return Err(bad(format!("expected {fields} fields, found {}", nums.len())));
        }
        let color = u32::try_from(nums[fields - 1]).map_err(|_| bad("color out of range".into()))?;
        let id = if kind == ColoringKind::Edge {
            let vid = |x: u64| VertexId::try_from(x).ok().filter(|&v| g.contains(v));
            match (vid(nums[0]), vid(nums[1])) {
                (Some(u), Some(v)) => g.edge_index(u, v).ok_or_else(|| bad(format!("no edge {u}-{v}")))?,
                _ => return Err(bad(format!("unknown vertex in edge {} {}", nums[0], nums[1]))),
            }
        } else {
            usize::try_from(nums[0]).ok().filter(|&v| v < g.n()).ok_or_else(|| bad(format!("unknown vertex {}", nums[0])))?
        };
        if out[id].replace(color).is_some() {
            return Err(bad("element colored twice".into()));
        }
    }
    Ok(out)
}

pub fn write_coloring(g: &Graph, kind: ColoringKind, coloring: &[Option<u32>]) -> String {
    let mut s = String::new();
    for (i, c) in coloring.iter().enumerate() {
        let Some(c) = c else { continue };
        if kind == ColoringKind::Edge {
            let (u, v) = g.edges()[i];
            let _ = writeln!(s, "{u} {v} {c}");
        } else {
            let _ = writeln!(s, "{i} {c}");
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_graph, GraphModel};
    use proptest::prelude::*;

    #[test]
    fn rejects_unknown_elements() {
        let g = generate_graph(&GraphModel::Path { n: 3 }, 0).unwrap();
        assert!(parse_coloring(&g, ColoringKind::Vertex, "3 0\n").is_err());
        assert!(parse_coloring(&g, ColoringKind::Edge, "0 2 1\n").is_err());
        assert!(parse_coloring(&g, ColoringKind::Edge, "0 9 1\n").is_err());
        assert!(parse_coloring(&g, ColoringKind::Vertex, "0 0\n0 1\n").is_err());
        assert!(parse_coloring(&g, ColoringKind::Vertex, "0 0 0\n").is_err());
        let c = parse_coloring(&g, ColoringKind::Edge, "# edges\n2 1 4\n").unwrap();
        assert_eq!(c, vec![None, Some(4)]);
    }

    proptest! {
        #[test]
        fn write_then_parse_is_identity(n in 1usize..30, p in 0.0f64..1.0, seed: u64, edge: bool) {
            let g = generate_graph(&GraphModel::Gnp { n, p }, seed).unwrap();
            let kind = if edge { ColoringKind::Edge } else { ColoringKind::Vertex };
            let colors: Vec<Option<u32>> = (0..kind.elements(&g) as u64)
                .map(|i| (seed.wrapping_mul(i + 1) % 3 != 0).then_some((i * 7 % 11) as u32))
                .collect();
            prop_assert_eq!(parse_coloring(&g, kind, &write_coloring(&g, kind, &colors)).unwrap(), colors);
        }
    }
}
