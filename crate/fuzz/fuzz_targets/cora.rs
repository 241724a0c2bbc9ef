#![no_main]

use libfuzzer_sys::fuzz_target;
use splinecnn::graph::parse_cora;

// Content and cites text separated by the first NUL byte.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let (content, cites) = text.split_once('\0').unwrap_or((text, ""));
    let _ = parse_cora(content, cites);
});
