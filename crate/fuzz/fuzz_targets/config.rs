#![no_main]

use libfuzzer_sys::fuzz_target;
use swarm_relloc::config::{parse_config_str, serialize_config, validate};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(cfg) = parse_config_str(text) else { return };
    let _ = validate(&cfg);
    // whatever parses must survive a round trip unchanged
    let again = serialize_config(&cfg);
    let back = parse_config_str(&again).expect("serialized config parses");
    assert_eq!(serialize_config(&back), again);
});
