#![no_main]

use congest_color::graph::{parse_graph, write_graph};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(g) = parse_graph(text) {
        assert_eq!(parse_graph(&write_graph(&g)).unwrap(), g);
    }
});
