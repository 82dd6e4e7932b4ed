//! Problem instances: budget, horizon, priority weights, and per-slot
//! arrival distributions.
//!
//! An instance rations `capacity` indivisible units over `horizon` time
//! slots among `groups` demand groups. At most one request arrives per
//! slot; the probability that group `i` arrives in slot `t` demanding `j`
//! units is sparse data keyed by `(t, i, j)` (or `(i, j)` when the
//! distribution is the same in every slot). All indices are 1-based, both
//! here and in the JSON file format.

use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

/// Slack allowed on file-borne probability mass before a slot is rejected.
pub const PROB_TOLERANCE: f64 = 1e-9;

/// Instance description as read from or written to JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawInstance {
    pub capacity: i64,
    pub horizon: i64,
    pub groups: i64,
    pub priorities: Vec<f64>,
    pub arrivals: RawArrivals,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RawArrivals {
    TimeInvariant { entries: Vec<RawEntry> },
    TimeVarying { entries: Vec<RawEntry> },
}

/// One sparse probability cell. `t` is present iff the instance is
/// time-varying.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<i64>,
    pub i: i64,
    pub j: i64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationError {
    #[error("{field} must be a positive integer no larger than {max}, got {value}")]
    DimensionOutOfRange {
        field: &'static str,
        value: i64,
        max: u32,
    },
    #[error("priorities has {actual} entries but the instance declares {expected} groups")]
    PriorityCountMismatch { expected: u32, actual: usize },
    #[error("priority of group {group} must lie in (0, 1], got {value}")]
    PriorityOutOfRange { group: u32, value: f64 },
    #[error("max priority must equal 1 (within {PROB_TOLERANCE}), got {max_priority}")]
    PriorityNotNormalized { max_priority: f64 },
    #[error("negative probability {prob} at (t={slot:?}, i={group}, j={demand})")]
    NegativeProbability {
        slot: Option<i64>,
        group: i64,
        demand: i64,
        prob: f64,
    },
    #[error("non-finite probability at (t={slot:?}, i={group}, j={demand})")]
    NonFiniteProbability {
        slot: Option<i64>,
        group: i64,
        demand: i64,
    },
    #[error("slot {slot:?} arrival mass {mass} exceeds 1 beyond tolerance")]
    SlotMassExceedsOne { slot: Option<u32>, mass: f64 },
    #[error("demand {demand} outside 1..={capacity}")]
    DemandOutOfRange { demand: i64, capacity: u32 },
    #[error("group index {group} outside 1..={groups}")]
    GroupOutOfRange { group: i64, groups: u32 },
    #[error("slot index {slot} outside 1..={horizon}")]
    SlotIndexOutOfRange { slot: i64, horizon: u32 },
    #[error("time-varying entry is missing its slot index")]
    MissingSlotIndex,
    #[error("time-invariant entry must not carry a slot index (got t={slot})")]
    UnexpectedSlotIndex { slot: i64 },
}

/// Every constraint violation found in a raw instance, in input order.
#[derive(Debug, Clone)]
pub struct ValidationErrors(pub Vec<ValidationError>);

impl fmt::Display for ValidationErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (idx, err) in self.0.iter().enumerate() {
            if idx > 0 {
                writeln!(f)?;
            }
            write!(f, "{err}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ValidationErrors {}

#[derive(Debug, Error)]
pub enum InstanceParseError {
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid instance:\n{0}")]
    Invalid(#[from] ValidationErrors),
}

/// The event observed in a single slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArrivalEvent {
    NoArrival,
    Arrival { group: u32, demand: u32 },
}

/// One cell of a per-slot categorical distribution, canonical order
/// (ascending group, then ascending demand).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrivalEntry {
    pub group: u32,
    pub demand: u32,
    pub prob: f64,
}

/// A single slot's arrival distribution with its sampling CDF.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotDist {
    entries: Vec<ArrivalEntry>,
    cum: Vec<f64>,
    no_arrival: f64,
}

impl SlotDist {
    fn from_cells(cells: &BTreeMap<(u32, u32), f64>) -> Self {
        let mut entries: Vec<ArrivalEntry> = cells
            .iter()
            .map(|(&(group, demand), &prob)| ArrivalEntry {
                group,
                demand,
                prob,
            })
            .collect();
        let mass: f64 = entries.iter().map(|e| e.prob).sum();
        if mass > 1.0 {
            // Within tolerance by the mass check; scale back onto the simplex.
            for e in &mut entries {
                e.prob /= mass;
            }
        }
        let mut cum = Vec::with_capacity(entries.len());
        let mut acc = 0.0;
        for e in &entries {
            acc += e.prob;
            cum.push(acc);
        }
        SlotDist {
            entries,
            cum,
            no_arrival: (1.0 - acc).max(0.0),
        }
    }

    fn empty() -> Self {
        SlotDist {
            entries: Vec::new(),
            cum: Vec::new(),
            no_arrival: 1.0,
        }
    }

    pub fn entries(&self) -> &[ArrivalEntry] {
        &self.entries
    }

    pub fn no_arrival(&self) -> f64 {
        self.no_arrival
    }

    /// Per-slot expected demand contribution of each entry summed.
    pub fn expected_demand_of(&self, group: u32) -> f64 {
        self.entries
            .iter()
            .filter(|e| e.group == group)
            .map(|e| e.prob * f64::from(e.demand))
            .sum()
    }

    fn sample(&self, draw: f64) -> ArrivalEvent {
        let idx = self.cum.partition_point(|&c| c <= draw);
        match self.entries.get(idx) {
            Some(e) => ArrivalEvent::Arrival {
                group: e.group,
                demand: e.demand,
            },
            None => ArrivalEvent::NoArrival,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum SlotData {
    Invariant(SlotDist),
    Varying(Vec<SlotDist>),
}

/// A validated instance. Immutable after construction and safe to share
/// across worker threads; sampling is a pure function of `(slot, draw)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    capacity: u32,
    horizon: u32,
    groups: u32,
    priorities: Vec<f64>,
    slots: SlotData,
}

/// Load parameters of an instance.
///
/// `r_beta` is the priority-weighted load: total expected demand, each
/// group discounted by its priority, divided by the capacity. `r_unit` is
/// the same with all priorities forced to 1, and `w_beta = r_beta / horizon`
/// is the per-slot weighted demand.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadSummary {
    pub r_beta: f64,
    pub r_unit: f64,
    pub w_beta: f64,
    pub expected_demand: Vec<f64>,
}

impl LoadSummary {
    /// Groups with zero expected demand are excluded from fairness ratios;
    /// reports print `n/a` for them.
    pub fn group_has_demand(&self, group: u32) -> bool {
        self.expected_demand[(group - 1) as usize] > 0.0
    }
}

impl Instance {
    /// Checks every constraint on a raw description and builds the
    /// normalized instance, or reports the full list of violations.
    pub fn validate(raw: &RawInstance) -> Result<Self, ValidationErrors> {
        let mut errs = Vec::new();
        let dim = |field: &'static str, value: i64, errs: &mut Vec<ValidationError>| -> Option<u32> {
            if value <= 0 || value > i64::from(u32::MAX) {
                errs.push(ValidationError::DimensionOutOfRange {
                    field,
                    value,
                    max: u32::MAX,
                });
                None
            } else {
                Some(value as u32)
            }
        };
        let capacity = dim("capacity", raw.capacity, &mut errs);
        let horizon = dim("horizon", raw.horizon, &mut errs);
        let groups = dim("groups", raw.groups, &mut errs);

        if let Some(n) = groups {
            if raw.priorities.len() != n as usize {
                errs.push(ValidationError::PriorityCountMismatch {
                    expected: n,
                    actual: raw.priorities.len(),
                });
            } else {
                let mut max_beta = f64::NEG_INFINITY;
                for (idx, &beta) in raw.priorities.iter().enumerate() {
                    if !beta.is_finite() || beta <= 0.0 || beta > 1.0 {
                        errs.push(ValidationError::PriorityOutOfRange {
                            group: idx as u32 + 1,
                            value: beta,
                        });
                    } else {
                        max_beta = max_beta.max(beta);
                    }
                }
                if max_beta.is_finite() && max_beta < 1.0 - PROB_TOLERANCE {
                    errs.push(ValidationError::PriorityNotNormalized {
                        max_priority: max_beta,
                    });
                }
            }
        }

        let (capacity, horizon, groups) = match (capacity, horizon, groups) {
            (Some(k), Some(t), Some(n)) => (k, t, n),
            _ => return Err(ValidationErrors(errs)),
        };

        let time_varying = matches!(raw.arrivals, RawArrivals::TimeVarying { .. });
        let entries = match &raw.arrivals {
            RawArrivals::TimeInvariant { entries } | RawArrivals::TimeVarying { entries } => {
                entries
            }
        };

        // Accumulate cells by (slot, group, demand); duplicates add up.
        // Slot key 0 stands for "every slot" in the time-invariant case.
        let mut cells: BTreeMap<(u32, u32, u32), f64> = BTreeMap::new();
        for e in entries {
            let mut ok = true;
            let slot = match (time_varying, e.t) {
                (true, None) => {
                    errs.push(ValidationError::MissingSlotIndex);
                    ok = false;
                    0
                }
                (true, Some(t)) if t < 1 || t > i64::from(horizon) => {
                    errs.push(ValidationError::SlotIndexOutOfRange {
                        slot: t,
                        horizon,
                    });
                    ok = false;
                    0
                }
                (true, Some(t)) => t as u32,
                (false, Some(t)) => {
                    errs.push(ValidationError::UnexpectedSlotIndex { slot: t });
                    ok = false;
                    0
                }
                (false, None) => 0,
            };
            if e.i < 1 || e.i > i64::from(groups) {
                errs.push(ValidationError::GroupOutOfRange {
                    group: e.i,
                    groups,
                });
                ok = false;
            }
            if e.j < 1 || e.j > i64::from(capacity) {
                errs.push(ValidationError::DemandOutOfRange {
                    demand: e.j,
                    capacity,
                });
                ok = false;
            }
            if !e.p.is_finite() {
                errs.push(ValidationError::NonFiniteProbability {
                    slot: e.t,
                    group: e.i,
                    demand: e.j,
                });
                ok = false;
            } else if e.p < 0.0 {
                errs.push(ValidationError::NegativeProbability {
                    slot: e.t,
                    group: e.i,
                    demand: e.j,
                    prob: e.p,
                });
                ok = false;
            }
            if ok && e.p > 0.0 {
                *cells.entry((slot, e.i as u32, e.j as u32)).or_insert(0.0) += e.p;
            }
        }

        // Per-slot mass bound.
        let mut by_slot: BTreeMap<u32, BTreeMap<(u32, u32), f64>> = BTreeMap::new();
        for (&(slot, group, demand), &p) in &cells {
            by_slot
                .entry(slot)
                .or_default()
                .insert((group, demand), p);
        }
        for (&slot, slot_cells) in &by_slot {
            let mass: f64 = slot_cells.values().sum();
            if mass > 1.0 + PROB_TOLERANCE {
                errs.push(ValidationError::SlotMassExceedsOne {
                    slot: if time_varying { Some(slot) } else { None },
                    mass,
                });
            }
        }

        if !errs.is_empty() {
            return Err(ValidationErrors(errs));
        }

        let slots = if time_varying {
            let mut dists = vec![SlotDist::empty(); horizon as usize];
            for (&slot, slot_cells) in &by_slot {
                dists[(slot - 1) as usize] = SlotDist::from_cells(slot_cells);
            }
            SlotData::Varying(dists)
        } else {
            let dist = by_slot
                .get(&0)
                .map(SlotDist::from_cells)
                .unwrap_or_else(SlotDist::empty);
            SlotData::Invariant(dist)
        };

        Ok(Instance {
            capacity,
            horizon,
            groups,
            priorities: raw.priorities.clone(),
            slots,
        })
    }

    pub fn from_json_str(s: &str) -> Result<Self, InstanceParseError> {
        let raw: RawInstance = serde_json::from_str(s)?;
        Ok(Self::validate(&raw)?)
    }

    /// Convenience constructor for a time-invariant instance from sparse
    /// `(group, demand, prob)` cells.
    pub fn time_invariant(
        capacity: u32,
        horizon: u32,
        priorities: &[f64],
        cells: &[(u32, u32, f64)],
    ) -> Result<Self, ValidationErrors> {
        Self::validate(&RawInstance {
            capacity: i64::from(capacity),
            horizon: i64::from(horizon),
            groups: priorities.len() as i64,
            priorities: priorities.to_vec(),
            arrivals: RawArrivals::TimeInvariant {
                entries: cells
                    .iter()
                    .map(|&(i, j, p)| RawEntry {
                        t: None,
                        i: i64::from(i),
                        j: i64::from(j),
                        p,
                    })
                    .collect(),
            },
        })
    }

    /// Convenience constructor for a time-varying instance from sparse
    /// `(slot, group, demand, prob)` cells.
    pub fn time_varying(
        capacity: u32,
        horizon: u32,
        priorities: &[f64],
        cells: &[(u32, u32, u32, f64)],
    ) -> Result<Self, ValidationErrors> {
        Self::validate(&RawInstance {
            capacity: i64::from(capacity),
            horizon: i64::from(horizon),
            groups: priorities.len() as i64,
            priorities: priorities.to_vec(),
            arrivals: RawArrivals::TimeVarying {
                entries: cells
                    .iter()
                    .map(|&(t, i, j, p)| RawEntry {
                        t: Some(i64::from(t)),
                        i: i64::from(i),
                        j: i64::from(j),
                        p,
                    })
                    .collect(),
            },
        })
    }

    pub fn capacity(&self) -> u32 {
        self.capacity
    }

    pub fn horizon(&self) -> u32 {
        self.horizon
    }

    pub fn groups(&self) -> u32 {
        self.groups
    }

    pub fn priorities(&self) -> &[f64] {
        &self.priorities
    }

    pub fn priority(&self, group: u32) -> f64 {
        self.priorities[(group - 1) as usize]
    }

    pub fn is_time_invariant(&self) -> bool {
        matches!(self.slots, SlotData::Invariant(_))
    }

    pub fn has_unit_priorities(&self) -> bool {
        self.priorities.iter().all(|&b| b == 1.0)
    }

    /// Arrival distribution of slot `t` (1-based).
    pub fn slot_dist(&self, slot: u32) -> &SlotDist {
        debug_assert!(slot >= 1 && slot <= self.horizon);
        match &self.slots {
            SlotData::Invariant(d) => d,
            SlotData::Varying(v) => &v[(slot - 1) as usize],
        }
    }

    /// Samples slot `t` from one uniform draw in `[0, 1)`. Events are laid
    /// out on the unit interval in canonical order (ascending group, then
    /// ascending demand) with the residual mass mapping to no arrival.
    pub fn sample_slot(&self, slot: u32, draw: f64) -> ArrivalEvent {
        self.slot_dist(slot).sample(draw)
    }

    pub fn load_summary(&self) -> LoadSummary {
        let mut expected_demand = vec![0.0; self.groups as usize];
        match &self.slots {
            SlotData::Invariant(d) => {
                for e in d.entries() {
                    expected_demand[(e.group - 1) as usize] +=
                        e.prob * f64::from(e.demand) * f64::from(self.horizon);
                }
            }
            SlotData::Varying(v) => {
                for d in v {
                    for e in d.entries() {
                        expected_demand[(e.group - 1) as usize] += e.prob * f64::from(e.demand);
                    }
                }
            }
        }
        let k = f64::from(self.capacity);
        let r_unit = expected_demand.iter().sum::<f64>() / k;
        let r_beta = expected_demand
            .iter()
            .zip(&self.priorities)
            .map(|(d, b)| d * b)
            .sum::<f64>()
            / k;
        LoadSummary {
            r_beta,
            r_unit,
            w_beta: r_beta / f64::from(self.horizon),
            expected_demand,
        }
    }

    /// Unit-priority load (`r_unit`) computed in `S` arithmetic, consistent
    /// with the calibration dynamic program.
    pub fn unit_load_in<S: Scalar>(&self) -> S {
        let k = S::from_int(u64::from(self.capacity));
        let mut total = S::zero();
        match &self.slots {
            SlotData::Invariant(d) => {
                let mut per_slot = S::zero();
                for e in d.entries() {
                    per_slot = per_slot
                        + S::from_prob(e.prob) * S::from_int(u64::from(e.demand));
                }
                total = S::from_int(u64::from(self.horizon)) * per_slot;
            }
            SlotData::Varying(v) => {
                for d in v {
                    for e in d.entries() {
                        total = total
                            + S::from_prob(e.prob) * S::from_int(u64::from(e.demand));
                    }
                }
            }
        }
        total / k
    }

    /// Priority-weighted expected demand of each group in `S` arithmetic.
    pub fn expected_demand_in<S: Scalar>(&self, group: u32) -> S {
        let mut total = S::zero();
        match &self.slots {
            SlotData::Invariant(d) => {
                for e in d.entries().iter().filter(|e| e.group == group) {
                    total =
                        total + S::from_prob(e.prob) * S::from_int(u64::from(e.demand));
                }
                total = total * S::from_int(u64::from(self.horizon));
            }
            SlotData::Varying(v) => {
                for d in v {
                    for e in d.entries().iter().filter(|e| e.group == group) {
                        total = total
                            + S::from_prob(e.prob) * S::from_int(u64::from(e.demand));
                    }
                }
            }
        }
        total
    }

    /// The screened instance: arrival probabilities thinned by each group's
    /// priority and priorities reset to 1. Its unit load equals this
    /// instance's `r_beta`.
    pub fn virtual_instance(&self) -> Instance {
        let thin = |d: &SlotDist| {
            let cells: BTreeMap<(u32, u32), f64> = d
                .entries()
                .iter()
                .map(|e| {
                    (
                        (e.group, e.demand),
                        e.prob * self.priorities[(e.group - 1) as usize],
                    )
                })
                .filter(|&(_, p)| p > 0.0)
                .collect();
            SlotDist::from_cells(&cells)
        };
        Instance {
            capacity: self.capacity,
            horizon: self.horizon,
            groups: self.groups,
            priorities: vec![1.0; self.groups as usize],
            slots: match &self.slots {
                SlotData::Invariant(d) => SlotData::Invariant(thin(d)),
                SlotData::Varying(v) => SlotData::Varying(v.iter().map(thin).collect()),
            },
        }
    }

    /// Expands a time-invariant instance into the equivalent time-varying
    /// form with identical per-slot distributions.
    pub fn expand_time_varying(&self) -> Instance {
        let dists = (1..=self.horizon)
            .map(|t| self.slot_dist(t).clone())
            .collect();
        Instance {
            capacity: self.capacity,
            horizon: self.horizon,
            groups: self.groups,
            priorities: self.priorities.clone(),
            slots: SlotData::Varying(dists),
        }
    }

    /// Serializes back into the raw file form (canonical cell order).
    pub fn to_raw(&self) -> RawInstance {
        let arrivals = match &self.slots {
            SlotData::Invariant(d) => RawArrivals::TimeInvariant {
                entries: d
                    .entries()
                    .iter()
                    .map(|e| RawEntry {
                        t: None,
                        i: i64::from(e.group),
                        j: i64::from(e.demand),
                        p: e.prob,
                    })
                    .collect(),
            },
            SlotData::Varying(v) => RawArrivals::TimeVarying {
                entries: v
                    .iter()
                    .enumerate()
                    .flat_map(|(idx, d)| {
                        d.entries().iter().map(move |e| RawEntry {
                            t: Some(idx as i64 + 1),
                            i: i64::from(e.group),
                            j: i64::from(e.demand),
                            p: e.prob,
                        })
                    })
                    .collect(),
            },
        };
        RawInstance {
            capacity: i64::from(self.capacity),
            horizon: i64::from(self.horizon),
            groups: i64::from(self.groups),
            priorities: self.priorities.clone(),
            arrivals,
        }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_raw()).expect("instance serializes")
    }
}
