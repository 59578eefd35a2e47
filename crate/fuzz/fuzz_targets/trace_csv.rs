#![no_main]

use libfuzzer_sys::fuzz_target;
use swarm_relloc::sim::trace::{parse_pair_trace, parse_trace};

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = parse_trace(text);
        let _ = parse_pair_trace(text);
    }
});
