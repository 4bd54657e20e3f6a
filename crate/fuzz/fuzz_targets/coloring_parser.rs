#![no_main]

use congest_color::graph::{generate_graph, GraphModel};
use congest_color::harness::{parse_coloring, verify_coloring, write_coloring, ColoringKind};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Some((&sel, rest)) = data.split_first() else { return };
    let Ok(text) = std::str::from_utf8(rest) else { return };
    let g = generate_graph(&GraphModel::Gnp { n: 12, p: 0.3 }, sel as u64 >> 2).unwrap();
    let kind = match sel % 3 {
        0 => ColoringKind::Vertex,
        1 => ColoringKind::Edge,
        _ => ColoringKind::Distance2,
    };
    if let Ok(c) = parse_coloring(&g, kind, text) {
        assert_eq!(parse_coloring(&g, kind, &write_coloring(&g, kind, &c)).unwrap(), c);
        let _ = verify_coloring(&g, &c, kind, u32::MAX as u64).unwrap();
    }
});
