#![no_main]

use libfuzzer_sys::fuzz_target;
use mbdp::mdp::{parse_policy_json, policy_to_json};

fuzz_target!(|data: &[u8]| {
    let Ok(policy) = parse_policy_json(data) else {
        return;
    };
    let text = policy_to_json(&policy);
    assert_eq!(parse_policy_json(text.as_bytes()).expect("round trip parses"), policy);
});
