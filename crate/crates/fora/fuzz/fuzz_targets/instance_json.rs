//! Fuzz the instance file path with arbitrary bytes: JSON parsing,
//! validation, and the consumers of a validated instance must never panic.
#![no_main]
use fora::model::{ArrivalEvent, Instance};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(inst) = Instance::from_json_str(text) else {
        return;
    };
    // A validated instance must hold its invariants under use.
    let load = inst.load_summary();
    assert!(load.r_beta.is_finite() && load.r_beta >= 0.0);
    assert!(load.r_beta <= load.r_unit + 1e-12);
    for t in 1..=inst.horizon().min(16) {
        let d = inst.slot_dist(t);
        assert!(d.no_arrival() >= 0.0);
        for u in [0.0, 0.25, 0.5, 0.999_999] {
            if let ArrivalEvent::Arrival { group, demand } = inst.sample_slot(t, u) {
                assert!(group >= 1 && group <= inst.groups());
                assert!(demand >= 1 && demand <= inst.capacity());
            }
        }
    }
    // Serialization round-trips to an equally valid instance.
    let again = Instance::from_json_str(&inst.to_json_string()).expect("round trip stays valid");
    assert_eq!(again.capacity(), inst.capacity());
});
