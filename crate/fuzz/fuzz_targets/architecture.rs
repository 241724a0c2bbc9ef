#![no_main]

use libfuzzer_sys::fuzz_target;
use splinecnn::harness::arch::Architecture;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(arch) = text.parse::<Architecture>() {
        assert_eq!(arch.to_string().parse::<Architecture>().expect("display parses"), arch);
    }
});
