#![no_main]

use libfuzzer_sys::fuzz_target;
use splinecnn::checkpoint::Checkpoint;
use splinecnn::conv::Strategy;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(c) = Checkpoint::parse(text) {
        let _ = c.to_network::<f32>(Strategy::Auto);
    }
});
