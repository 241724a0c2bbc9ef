#![no_main]

use libfuzzer_sys::fuzz_target;
use splinecnn::graph::{parse_graph_container, write_graph_container};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(graphs) = parse_graph_container(text) {
        let again = parse_graph_container(&write_graph_container(&graphs)).expect("written container parses");
        assert_eq!(again, graphs);
    }
});
