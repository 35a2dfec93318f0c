#![no_main]

use libfuzzer_sys::fuzz_target;
use mbdp::mdp::{mdp_to_json, parse_mdp_json, validate_mdp};
use mbdp::operators::{apply_minibatch, BatchSchedule};
use mbdp::ValueFunction;

fuzz_target!(|data: &[u8]| {
    let Ok(mdp) = parse_mdp_json(data) else {
        return;
    };
    // Validation must report problems, never panic.
    let report = validate_mdp(&mdp);
    let _ = report.to_string();
    if !report.is_empty() {
        return;
    }
    let text = mdp_to_json(&mdp);
    let again = parse_mdp_json(text.as_bytes()).expect("round trip parses");
    assert_eq!(again, mdp);
    if mdp.n_states <= 64 {
        let m = 1 + data.len() % mdp.n_states;
        let schedule = BatchSchedule::identity(mdp.n_states, m).unwrap();
        let out = apply_minibatch(&mdp, &ValueFunction::zeros(mdp.n_states), &schedule).unwrap();
        assert_eq!(out.len(), mdp.n_states);
    }
});
