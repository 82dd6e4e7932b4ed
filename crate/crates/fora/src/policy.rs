//! Online allocation policies.
//!
//! Every policy answers one question per arriving request: how many units
//! to hand over right now. Two families carry the guarantees:
//!
//! - randomized thresholds (`threshold-unit`, `threshold-weighted`), which
//!   accept a request with a probability calibrated by the budget
//!   distribution of [`crate::gamma`] and then fill it as far as the
//!   remaining budget allows;
//! - random cyclic blocks (`rcb`, `rcb-weighted`), which place the units on
//!   a cycle and serve each request from a uniformly rotated contiguous
//!   block, skipping units already consumed.
//!
//! The weighted variants first screen each request with a Bernoulli draw at
//! the group's priority. The remaining policies are baselines: an
//! all-or-nothing lottery, all-or-nothing greedy, plain greedy, and greedy
//! with a group denylist.
//!
//! Randomness enters only through uniform draws handed to [`Policy::decide`];
//! the draw budget per arrival is fixed per policy (threshold 1, weighted
//! threshold 2, rcb 1, weighted rcb 2, lottery 1 before the horizon) so
//! trials are reproducible and policies can be compared under common random
//! numbers. [`Policy::branches`] exposes the same decision as an explicit
//! discrete distribution for exact enumeration.

use crate::gamma::{compute_gamma_in, GammaError, GammaTable};
use crate::model::Instance;
use crate::scalar::Scalar;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error(transparent)]
    Gamma(#[from] GammaError),
    #[error("threshold policy has no calibration table")]
    MissingGammaTable,
    #[error("denylist names unknown group {group}")]
    UnknownGroup { group: u32 },
    #[error("unknown policy '{name}'")]
    UnknownPolicy { name: String },
}

/// Policy selector. `DenylistGreedy` carries the denied group ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PolicyKind {
    ThresholdUnit,
    ThresholdWeighted,
    Rcb,
    RcbWeighted,
    AonLottery,
    AonGreedy,
    GreedyFcfs,
    DenylistGreedy { denied: Vec<u32> },
}

impl PolicyKind {
    /// Parses the CLI policy name; `deny` is only meaningful for
    /// `denylist-greedy`.
    pub fn from_cli(name: &str, deny: &[u32]) -> Result<Self, PolicyError> {
        Ok(match name {
            "threshold-unit" => PolicyKind::ThresholdUnit,
            "threshold-weighted" => PolicyKind::ThresholdWeighted,
            "rcb" => PolicyKind::Rcb,
            "rcb-weighted" => PolicyKind::RcbWeighted,
            "aon-lottery" => PolicyKind::AonLottery,
            "aon-greedy" => PolicyKind::AonGreedy,
            "greedy-fcfs" => PolicyKind::GreedyFcfs,
            "denylist-greedy" => {
                let mut denied = deny.to_vec();
                denied.sort_unstable();
                denied.dedup();
                PolicyKind::DenylistGreedy { denied }
            }
            _ => {
                return Err(PolicyError::UnknownPolicy {
                    name: name.to_string(),
                })
            }
        })
    }

    pub fn cli_name(&self) -> &'static str {
        match self {
            PolicyKind::ThresholdUnit => "threshold-unit",
            PolicyKind::ThresholdWeighted => "threshold-weighted",
            PolicyKind::Rcb => "rcb",
            PolicyKind::RcbWeighted => "rcb-weighted",
            PolicyKind::AonLottery => "aon-lottery",
            PolicyKind::AonGreedy => "aon-greedy",
            PolicyKind::GreedyFcfs => "greedy-fcfs",
            PolicyKind::DenylistGreedy { .. } => "denylist-greedy",
        }
    }
}

/// Set of still-free unit positions `1..=len` on the cycle.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UnitSet {
    len: u32,
    words: Vec<u64>,
}

impl UnitSet {
    pub fn full(len: u32) -> Self {
        let mut words = vec![u64::MAX; len.div_ceil(64) as usize];
        let tail = len % 64;
        if tail != 0 {
            *words.last_mut().unwrap() = (1u64 << tail) - 1;
        }
        UnitSet { len, words }
    }

    pub fn len(&self) -> u32 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    pub fn count(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    pub fn contains(&self, unit: u32) -> bool {
        debug_assert!(unit >= 1 && unit <= self.len);
        let bit = unit - 1;
        self.words[(bit / 64) as usize] & (1 << (bit % 64)) != 0
    }

    fn remove(&mut self, unit: u32) {
        let bit = unit - 1;
        self.words[(bit / 64) as usize] &= !(1 << (bit % 64));
    }

    pub fn iter(&self) -> impl Iterator<Item = u32> + '_ {
        (1..=self.len).filter(|&u| self.contains(u))
    }

    /// Claims the free units inside the cyclic block of `size` positions
    /// starting at `start`, removing them and returning the consumed set.
    /// Position arithmetic maps residues into `1..=len`.
    pub fn claim_block(&mut self, start: u32, size: u32) -> UnitSet {
        debug_assert!(start >= 1 && start <= self.len && size <= self.len);
        let mut consumed = UnitSet {
            len: self.len,
            words: vec![0; self.words.len()],
        };
        for offset in 0..size {
            let unit = (start - 1 + offset) % self.len + 1;
            if self.contains(unit) {
                self.remove(unit);
                let bit = unit - 1;
                consumed.words[(bit / 64) as usize] |= 1 << (bit % 64);
            }
        }
        consumed
    }
}

/// Per-trial mutable state owned by exactly one trial at a time.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PolicyState {
    Budget { remaining: u32 },
    Cycle { free: UnitSet },
    Lottery { lucky: u32, served: bool, remaining: u32 },
}

impl PolicyState {
    /// Residual budget `B_t` implied by the state.
    pub fn budget(&self) -> u32 {
        match self {
            PolicyState::Budget { remaining } | PolicyState::Lottery { remaining, .. } => {
                *remaining
            }
            PolicyState::Cycle { free } => free.count(),
        }
    }
}

/// What a single decision did, for audit trails.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Audit {
    pub screening_passed: Option<bool>,
    pub accepted: Option<bool>,
    pub start_index: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decision {
    pub allocation: u32,
    pub audit: Audit,
}

/// One outcome of the policy's internal randomness for a fixed arrival:
/// probability, allocation, consumed units (cycle policies only), and the
/// successor state.
#[derive(Debug, Clone)]
pub struct Branch<S> {
    pub prob: S,
    pub allocation: u32,
    pub consumed: Option<UnitSet>,
    pub state: PolicyState,
}

/// A policy bound to an instance (calibration tables computed, priorities
/// captured). Decision logic is pure given `(state, event, draws)`, so one
/// `Policy` can serve any number of concurrent trials.
#[derive(Debug, Clone)]
pub struct Policy<S = f64> {
    kind: PolicyKind,
    capacity: u32,
    groups: u32,
    betas: Vec<S>,
    gamma: Option<GammaTable<S>>,
}

impl<S: Scalar> Policy<S> {
    pub fn build(kind: PolicyKind, instance: &Instance) -> Result<Self, PolicyError> {
        let gamma = match kind {
            PolicyKind::ThresholdUnit => Some(compute_gamma_in::<S>(instance)?),
            PolicyKind::ThresholdWeighted => {
                Some(compute_gamma_in::<S>(&instance.virtual_instance())?)
            }
            _ => None,
        };
        if let PolicyKind::DenylistGreedy { denied } = &kind {
            if let Some(&g) = denied.iter().find(|&&g| g < 1 || g > instance.groups()) {
                return Err(PolicyError::UnknownGroup { group: g });
            }
        }
        Ok(Policy {
            kind,
            capacity: instance.capacity(),
            groups: instance.groups(),
            betas: instance
                .priorities()
                .iter()
                .map(|&b| S::from_prob(b))
                .collect(),
            gamma,
        })
    }

    pub fn kind(&self) -> &PolicyKind {
        &self.kind
    }

    pub fn capacity(&self) -> u32 {
        self.capacity
    }

    pub fn gamma_table(&self) -> Option<&GammaTable<S>> {
        self.gamma.as_ref()
    }

    /// Uniform draws consumed before slot 1.
    pub fn pre_horizon_draws(&self) -> usize {
        match self.kind {
            PolicyKind::AonLottery => 1,
            _ => 0,
        }
    }

    /// Uniform draws consumed on every arrival, regardless of their
    /// outcome, so draw streams stay aligned across runs.
    pub fn draws_per_arrival(&self) -> usize {
        match self.kind {
            PolicyKind::ThresholdUnit | PolicyKind::Rcb => 1,
            PolicyKind::ThresholdWeighted | PolicyKind::RcbWeighted => 2,
            _ => 0,
        }
    }

    /// Upper bound on the number of branches per arrival.
    pub fn max_branching(&self) -> u64 {
        match self.kind {
            PolicyKind::ThresholdUnit | PolicyKind::ThresholdWeighted => 2,
            PolicyKind::Rcb => u64::from(self.capacity),
            PolicyKind::RcbWeighted => u64::from(self.capacity) + 1,
            _ => 1,
        }
    }

    /// Whether branches report consumed unit sets (cycle policies).
    pub fn tracks_units(&self) -> bool {
        matches!(self.kind, PolicyKind::Rcb | PolicyKind::RcbWeighted)
    }

    fn fresh_state(&self, lucky: u32) -> PolicyState {
        match self.kind {
            PolicyKind::Rcb | PolicyKind::RcbWeighted => PolicyState::Cycle {
                free: UnitSet::full(self.capacity),
            },
            PolicyKind::AonLottery => PolicyState::Lottery {
                lucky,
                served: false,
                remaining: self.capacity,
            },
            _ => PolicyState::Budget {
                remaining: self.capacity,
            },
        }
    }

    /// Initial state for a trial; `pre_draws` must hold
    /// [`pre_horizon_draws`](Self::pre_horizon_draws) uniforms.
    pub fn initial_state(&self, pre_draws: &[f64]) -> PolicyState {
        let lucky = match self.kind {
            PolicyKind::AonLottery => index_from_draw(pre_draws[0], self.groups),
            _ => 0,
        };
        self.fresh_state(lucky)
    }

    /// Initial state distribution for exact enumeration.
    pub fn initial_states(&self) -> Vec<(S, PolicyState)> {
        match self.kind {
            PolicyKind::AonLottery => {
                let p = S::one() / S::from_int(u64::from(self.groups));
                (1..=self.groups)
                    .map(|lucky| (p.clone(), self.fresh_state(lucky)))
                    .collect()
            }
            _ => vec![(S::one(), self.fresh_state(0))],
        }
    }

    fn acceptance_prob(&self, slot: u32, demand: u32) -> Result<S, PolicyError> {
        Ok(self
            .gamma
            .as_ref()
            .ok_or(PolicyError::MissingGammaTable)?
            .acceptance_prob(slot, demand))
    }

    /// The discrete outcome distribution of one arrival `(group, demand)`
    /// in `slot`, with equal successor states merged.
    pub fn branches(
        &self,
        state: &PolicyState,
        slot: u32,
        group: u32,
        demand: u32,
    ) -> Result<Vec<Branch<S>>, PolicyError> {
        let mut acc: BTreeMap<(u32, PolicyState), (S, Option<UnitSet>)> = BTreeMap::new();
        let mut push = |prob: S, allocation: u32, consumed: Option<UnitSet>, state: PolicyState| {
            if prob.is_zero() {
                return;
            }
            let slot = acc
                .entry((allocation, state))
                .or_insert_with(|| (S::zero(), consumed));
            slot.0 = slot.0.clone() + prob;
        };

        match (&self.kind, state) {
            (PolicyKind::ThresholdUnit, PolicyState::Budget { remaining }) => {
                let q = self.acceptance_prob(slot, demand)?;
                let alloc = demand.min(*remaining);
                push(
                    q.clone(),
                    alloc,
                    None,
                    PolicyState::Budget {
                        remaining: remaining - alloc,
                    },
                );
                push(S::one() - q, 0, None, state.clone());
            }
            (PolicyKind::ThresholdWeighted, PolicyState::Budget { remaining }) => {
                let q = self.acceptance_prob(slot, demand)?;
                let through = self.betas[(group - 1) as usize].clone() * q;
                let alloc = demand.min(*remaining);
                push(
                    through.clone(),
                    alloc,
                    None,
                    PolicyState::Budget {
                        remaining: remaining - alloc,
                    },
                );
                push(S::one() - through, 0, None, state.clone());
            }
            (PolicyKind::Rcb, PolicyState::Cycle { free }) => {
                let per_start = S::one() / S::from_int(u64::from(self.capacity));
                for start in 1..=self.capacity {
                    let mut next = free.clone();
                    let consumed = next.claim_block(start, demand);
                    push(
                        per_start.clone(),
                        consumed.count(),
                        Some(consumed),
                        PolicyState::Cycle { free: next },
                    );
                }
            }
            (PolicyKind::RcbWeighted, PolicyState::Cycle { free }) => {
                let beta = self.betas[(group - 1) as usize].clone();
                let per_start =
                    beta.clone() / S::from_int(u64::from(self.capacity));
                for start in 1..=self.capacity {
                    let mut next = free.clone();
                    let consumed = next.claim_block(start, demand);
                    push(
                        per_start.clone(),
                        consumed.count(),
                        Some(consumed),
                        PolicyState::Cycle { free: next },
                    );
                }
                push(S::one() - beta, 0, None, state.clone());
            }
            (PolicyKind::AonLottery, PolicyState::Lottery { lucky, served, remaining }) => {
                if group == *lucky && !served {
                    let alloc = if demand <= *remaining { demand } else { 0 };
                    push(
                        S::one(),
                        alloc,
                        None,
                        PolicyState::Lottery {
                            lucky: *lucky,
                            served: true,
                            remaining: remaining - alloc,
                        },
                    );
                } else {
                    push(S::one(), 0, None, state.clone());
                }
            }
            (PolicyKind::AonGreedy, PolicyState::Budget { remaining }) => {
                let alloc = if demand <= *remaining { demand } else { 0 };
                push(
                    S::one(),
                    alloc,
                    None,
                    PolicyState::Budget {
                        remaining: remaining - alloc,
                    },
                );
            }
            (PolicyKind::GreedyFcfs, PolicyState::Budget { remaining }) => {
                let alloc = demand.min(*remaining);
                push(
                    S::one(),
                    alloc,
                    None,
                    PolicyState::Budget {
                        remaining: remaining - alloc,
                    },
                );
            }
            (PolicyKind::DenylistGreedy { denied }, PolicyState::Budget { remaining }) => {
                let alloc = if denied.contains(&group) {
                    0
                } else {
                    demand.min(*remaining)
                };
                push(
                    S::one(),
                    alloc,
                    None,
                    PolicyState::Budget {
                        remaining: remaining - alloc,
                    },
                );
            }
            _ => unreachable!("state does not belong to this policy"),
        }

        Ok(acc
            .into_iter()
            .map(|((allocation, state), (prob, consumed))| Branch {
                prob,
                allocation,
                consumed,
                state,
            })
            .collect())
    }
}

impl Policy<f64> {
    /// Plays out one arrival. `draws` must hold
    /// [`draws_per_arrival`](Self::draws_per_arrival) uniforms in `[0, 1)`;
    /// all of them count as consumed even on rejection paths.
    pub fn decide(
        &self,
        state: &mut PolicyState,
        slot: u32,
        group: u32,
        demand: u32,
        draws: &[f64],
    ) -> Result<Decision, PolicyError> {
        debug_assert_eq!(draws.len(), self.draws_per_arrival());
        let decision = match (&self.kind, &mut *state) {
            (PolicyKind::ThresholdUnit, PolicyState::Budget { remaining }) => {
                let q = self.acceptance_prob(slot, demand)?;
                let accepted = draws[0] < q;
                let allocation = if accepted { demand.min(*remaining) } else { 0 };
                *remaining -= allocation;
                Decision {
                    allocation,
                    audit: Audit {
                        accepted: Some(accepted),
                        ..Audit::default()
                    },
                }
            }
            (PolicyKind::ThresholdWeighted, PolicyState::Budget { remaining }) => {
                let beta = self.betas[(group - 1) as usize];
                let screening = draws[0] < beta;
                let accepted = screening && draws[1] < self.acceptance_prob(slot, demand)?;
                let allocation = if accepted { demand.min(*remaining) } else { 0 };
                *remaining -= allocation;
                Decision {
                    allocation,
                    audit: Audit {
                        screening_passed: Some(screening),
                        accepted: screening.then_some(accepted),
                        ..Audit::default()
                    },
                }
            }
            (PolicyKind::Rcb, PolicyState::Cycle { free }) => {
                let start = index_from_draw(draws[0], self.capacity);
                let allocation = free.claim_block(start, demand).count();
                Decision {
                    allocation,
                    audit: Audit {
                        start_index: Some(start),
                        ..Audit::default()
                    },
                }
            }
            (PolicyKind::RcbWeighted, PolicyState::Cycle { free }) => {
                let beta = self.betas[(group - 1) as usize];
                let screening = draws[0] < beta;
                if screening {
                    let start = index_from_draw(draws[1], self.capacity);
                    let allocation = free.claim_block(start, demand).count();
                    Decision {
                        allocation,
                        audit: Audit {
                            screening_passed: Some(true),
                            start_index: Some(start),
                            ..Audit::default()
                        },
                    }
                } else {
                    Decision {
                        allocation: 0,
                        audit: Audit {
                            screening_passed: Some(false),
                            ..Audit::default()
                        },
                    }
                }
            }
            (PolicyKind::AonLottery, PolicyState::Lottery { lucky, served, remaining }) => {
                let mut allocation = 0;
                if group == *lucky && !*served {
                    *served = true;
                    if demand <= *remaining {
                        allocation = demand;
                        *remaining -= demand;
                    }
                }
                Decision {
                    allocation,
                    audit: Audit::default(),
                }
            }
            (PolicyKind::AonGreedy, PolicyState::Budget { remaining }) => {
                let allocation = if demand <= *remaining { demand } else { 0 };
                *remaining -= allocation;
                Decision {
                    allocation,
                    audit: Audit::default(),
                }
            }
            (PolicyKind::GreedyFcfs, PolicyState::Budget { remaining }) => {
                let allocation = demand.min(*remaining);
                *remaining -= allocation;
                Decision {
                    allocation,
                    audit: Audit::default(),
                }
            }
            (PolicyKind::DenylistGreedy { denied }, PolicyState::Budget { remaining }) => {
                let allocation = if denied.contains(&group) {
                    0
                } else {
                    demand.min(*remaining)
                };
                *remaining -= allocation;
                Decision {
                    allocation,
                    audit: Audit::default(),
                }
            }
            _ => unreachable!("state does not belong to this policy"),
        };
        Ok(decision)
    }
}

/// Maps a uniform draw in `[0, 1)` onto `{1..n}` without modulo bias.
fn index_from_draw(draw: f64, n: u32) -> u32 {
    ((draw * f64::from(n)) as u32 + 1).min(n)
}
