#![no_main]

use libfuzzer_sys::fuzz_target;
use mbdp::mdp::{parse_value_json, value_to_json};

fuzz_target!(|data: &[u8]| {
    let Ok(value) = parse_value_json(data) else {
        return;
    };
    let text = value_to_json(&value);
    let again = parse_value_json(text.as_bytes()).expect("round trip parses");
    // JSON numbers are always finite, so values survive exactly.
    assert_eq!(again, value);
});
