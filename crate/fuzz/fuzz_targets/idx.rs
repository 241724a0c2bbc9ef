#![no_main]

use libfuzzer_sys::fuzz_target;
use splinecnn::graph::{parse_idx_images, parse_idx_labels};

fuzz_target!(|data: &[u8]| {
    let _ = parse_idx_images(data);
    let _ = parse_idx_labels(data);
});
