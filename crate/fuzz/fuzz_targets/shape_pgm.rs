#![no_main]

use libfuzzer_sys::fuzz_target;
use swarm_relloc::shape::parse_pgm;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = parse_pgm(text);
    }
});
