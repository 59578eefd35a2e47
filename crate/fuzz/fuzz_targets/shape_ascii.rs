#![no_main]

use libfuzzer_sys::fuzz_target;
use swarm_relloc::shape::{gray_transform, parse_ascii};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(grid) = parse_ascii(text) {
        if grid.width * grid.height <= 4096 {
            let _ = gray_transform(&grid, 3);
        }
    }
});
