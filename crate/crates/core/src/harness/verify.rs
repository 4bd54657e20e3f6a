use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::graph::{square_graph, Graph, VertexId};

use super::HarnessError;

/// Which adjacency a coloring must respect.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColoringKind {
    Vertex,
    Edge,
    Distance2,
}

impl ColoringKind {
    /// Number of colorable elements in `g`.
    pub fn elements(self, g: &Graph) -> usize {
        match self {
            ColoringKind::Edge => g.m(),
            _ => g.n(),
        }
    }
}

impl FromStr for ColoringKind {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "vertex" => Ok(ColoringKind::Vertex),
            "edge" => Ok(ColoringKind::Edge),
            "distance2" | "d2" => Ok(ColoringKind::Distance2),
            _ => Err(HarnessError::Input(format!("unknown coloring kind {s:?}"))),
        }
    }
}

impl fmt::Display for ColoringKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ColoringKind::Vertex => "vertex",
            ColoringKind::Edge => "edge",
            ColoringKind::Distance2 => "distance2",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub kind: ColoringKind,
    pub proper: bool,
    /// Every element has a color.
    pub complete: bool,
    pub colors_used: u64,
    pub budget: u64,
    /// Every color is below `budget`.
    pub budget_ok: bool,
    /// Conflicting pairs, as element indices.
    pub conflicts: u64,
    pub first_conflict: Option<(u64, u64)>,
}

impl Verdict {
    pub fn passed(&self) -> bool {
        self.proper && self.complete && self.budget_ok
    }
}

/// Checks a possibly partial coloring. Edge colorings are indexed like
/// `g.edges()`; the others by vertex.
pub fn verify_coloring(
    g: &Graph,
    coloring: &[Option<u32>],
    kind: ColoringKind,
    budget: u64,
) -> Result<Verdict, HarnessError> {
    let want = kind.elements(g);
    if coloring.len() != want {
        return Err(HarnessError::Input(format!(
            "{kind} coloring has {} entries, graph has {want}",
            coloring.len()
        )));
    }
    let mut conflicts = 0u64;
    let mut first = None;
    let mut clash = |a: usize, b: usize| {
        if coloring[a].is_some() && coloring[a] == coloring[b] {
            conflicts += 1;
            first.get_or_insert((a.min(b) as u64, a.max(b) as u64));
        }
    };
    match kind {
        ColoringKind::Vertex => g.edges().iter().for_each(|&(u, v)| clash(u as usize, v as usize)),
        ColoringKind::Distance2 => {
            square_graph(g).edges().iter().for_each(|&(u, v)| clash(u as usize, v as usize))
        }
        ColoringKind::Edge => {
            for v in 0..g.n() as VertexId {
                let inc = g.incident_edges(v);
                for (i, &a) in inc.iter().enumerate() {
                    for &b in &inc[i + 1..] {
                        clash(a as usize, b as usize);
                    }
                }
            }
        }
    }
    let distinct: HashSet<u32> = coloring.iter().flatten().copied().collect();
    Ok(Verdict {
        kind,
        proper: conflicts == 0,
        complete: coloring.iter().all(Option::is_some),
        colors_used: distinct.len() as u64,
        budget,
        budget_ok: distinct.iter().all(|&c| (c as u64) < budget),
        conflicts,
        first_conflict: first,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_graph, GraphModel};

    #[test]
    fn triangle_and_path_examples() {
        let tri = generate_graph(&GraphModel::Clique { n: 3 }, 0).unwrap();
        let v = verify_coloring(&tri, &[Some(0), Some(1), Some(2)], ColoringKind::Vertex, 3).unwrap();
        assert!(v.passed());
        assert_eq!(v.colors_used, 3);
        let p3 = generate_graph(&GraphModel::Path { n: 3 }, 0).unwrap();
        let v = verify_coloring(&p3, &[Some(0), Some(0)], ColoringKind::Edge, 2).unwrap();
        assert!(!v.proper);
        assert_eq!(v.first_conflict, Some((0, 1)));
        let v = verify_coloring(&p3, &[Some(0), Some(1), Some(0)], ColoringKind::Distance2, 3).unwrap();
        assert!(!v.proper);
        let v = verify_coloring(&p3, &[Some(0), Some(1), Some(0)], ColoringKind::Vertex, 2).unwrap();
        assert!(v.passed());
        let v = verify_coloring(&p3, &[Some(0), None, Some(5)], ColoringKind::Vertex, 2).unwrap();
        assert!(v.proper && !v.complete && !v.budget_ok);
        assert!(verify_coloring(&p3, &[Some(0)], ColoringKind::Edge, 2).is_err());
    }
}
