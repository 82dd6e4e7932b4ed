//! Fuzz validation with structured raw instances (skipping JSON): any
//! description either validates or yields an error list, never a panic,
//! and validated instances stay on the probability simplex.
#![no_main]
use arbitrary::Arbitrary;
use fora::model::{Instance, RawArrivals, RawEntry, RawInstance};
use libfuzzer_sys::fuzz_target;

#[derive(Arbitrary, Debug)]
struct RawParts {
    capacity: i64,
    horizon: i64,
    groups: i64,
    priorities: Vec<f64>,
    time_varying: bool,
    entries: Vec<(Option<i64>, i64, i64, f64)>,
}

fuzz_target!(|parts: RawParts| {
    let entries: Vec<RawEntry> = parts
        .entries
        .iter()
        .take(64)
        .map(|&(t, i, j, p)| RawEntry { t, i, j, p })
        .collect();
    let raw = RawInstance {
        capacity: parts.capacity,
        horizon: parts.horizon,
        groups: parts.groups,
        priorities: parts.priorities.iter().take(16).copied().collect(),
        arrivals: if parts.time_varying {
            RawArrivals::TimeVarying { entries }
        } else {
            RawArrivals::TimeInvariant { entries }
        },
    };
    match Instance::validate(&raw) {
        Err(errs) => assert!(!errs.0.is_empty(), "error result with empty list"),
        Ok(inst) => {
            for t in 1..=inst.horizon().min(8) {
                let d = inst.slot_dist(t);
                let mass: f64 = d.entries().iter().map(|e| e.prob).sum();
                assert!(mass <= 1.0 + 1e-9);
                assert!(d.no_arrival() >= 0.0);
                assert!(mass + d.no_arrival() <= 1.0 + 1e-9);
            }
        }
    }
});
