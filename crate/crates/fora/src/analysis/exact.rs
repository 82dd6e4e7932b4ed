//! Exact policy evaluation by weighted traversal of the full outcome tree.
//!
//! Slots are processed in order; the cross product of arrival events and
//! policy branches expands a distribution over policy states, and states
//! with the same sufficient statistic are merged (the budget level for
//! threshold and greedy policies, the free-unit set for cyclic ones).
//! The traversal yields, exactly up to arithmetic:
//!
//! - per-group expected allocation and the fairness ratios,
//! - the conditional expected allocation given each positive-probability
//!   arrival event (budgets at a slot are independent of that slot's
//!   arrival, so the state distribution integrates the conditional),
//! - the budget distribution at the start of every slot,
//! - per-unit consumption probabilities for cyclic policies,
//! - optionally, exact expected fill rates, which need the joint
//!   per-group (allocation, demand) tally folded into the state key.
//!
//! With [`Arithmetic::Rational`] every quantity is computed in exact
//! rational arithmetic over the instance's stored probabilities.

use crate::analysis::{bounds, BoundSet};
use crate::model::Instance;
use crate::policy::{Policy, PolicyError, PolicyKind, PolicyState};
use crate::report::FairnessRow;
use crate::scalar::Scalar;
use num_rational::BigRational;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arithmetic {
    Float,
    Rational,
}

#[derive(Debug, Clone)]
pub struct ExactOptions {
    /// Cap on `states x (events + 1) x branches` at any slot.
    pub state_limit: u64,
    pub arithmetic: Arithmetic,
    /// Track joint per-group (allocation, demand) tallies to compute exact
    /// expected fill rates. Multiplies the state space.
    pub track_fill: bool,
}

impl Default for ExactOptions {
    fn default() -> Self {
        ExactOptions {
            state_limit: 10_000_000,
            arithmetic: Arithmetic::Float,
            track_fill: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExactError {
    #[error("projected enumeration size {projected} exceeds the state limit {limit}")]
    StateSpaceExceeded { projected: u128, limit: u64 },
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

/// Exact conditional expectation of the allocation given one arrival event.
#[derive(Debug, Clone, PartialEq)]
pub struct CondRow {
    pub group: u32,
    pub slot: u32,
    pub demand: u32,
    pub arrival_prob: f64,
    pub mean_alloc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactReport {
    pub rows: Vec<FairnessRow>,
    pub min_fe_fr_beta: Option<f64>,
    pub bounds: BoundSet,
    pub conditionals: Vec<CondRow>,
    /// `P(B_t = b)` at the start of each slot, indexed `[t-1][b]`.
    pub budget_dist: Vec<Vec<f64>>,
    /// `P(unit u allocated to group i)`, indexed `[u-1][i-1]`; cyclic
    /// policies only.
    pub unit_alloc_prob: Option<Vec<Vec<f64>>>,
    /// Exact `E[F_i]` when fill tracking was requested.
    pub fill_rate: Option<Vec<f64>>,
    pub leaf_mass: f64,
    pub leaf_count: u64,
    pub max_states: u64,
}

type StateKey = (PolicyState, Option<Vec<(u32, u32)>>);

pub fn exact_evaluate(
    instance: &Instance,
    kind: &PolicyKind,
    opts: &ExactOptions,
) -> Result<ExactReport, ExactError> {
    match opts.arithmetic {
        Arithmetic::Float => run::<f64>(instance, kind, opts),
        Arithmetic::Rational => run::<BigRational>(instance, kind, opts),
    }
}

fn run<S: Scalar>(
    instance: &Instance,
    kind: &PolicyKind,
    opts: &ExactOptions,
) -> Result<ExactReport, ExactError> {
    let policy = Policy::<S>::build(kind.clone(), instance)?;
    let n = instance.groups() as usize;
    let k = instance.capacity() as usize;

    let tallies_template = opts.track_fill.then(|| vec![(0u32, 0u32); n]);
    let mut dist: BTreeMap<StateKey, S> = BTreeMap::new();
    for (p, state) in policy.initial_states() {
        let key = (state, tallies_template.clone());
        let entry = dist.entry(key).or_insert_with(S::zero);
        *entry = entry.clone() + p;
    }

    let mut expected_alloc = vec![S::zero(); n];
    let mut conditionals: Vec<(u32, u32, u32, f64, S)> = Vec::new();
    let mut budget_dist: Vec<Vec<S>> = Vec::new();
    let mut unit_alloc = policy
        .tracks_units()
        .then(|| vec![vec![S::zero(); n]; k]);
    let mut max_states = dist.len() as u64;

    for slot in 1..=instance.horizon() {
        let mut budget_row = vec![S::zero(); k + 1];
        for ((state, _), p) in &dist {
            let b = state.budget() as usize;
            budget_row[b] = budget_row[b].clone() + p.clone();
        }
        budget_dist.push(budget_row);

        let slot_dist = instance.slot_dist(slot);
        let entries = slot_dist.entries();
        let projected = dist.len() as u128
            * (1 + entries.len() as u128 * u128::from(policy.max_branching()));
        if projected > u128::from(opts.state_limit) {
            return Err(ExactError::StateSpaceExceeded {
                projected,
                limit: opts.state_limit,
            });
        }

        let no_arrival = S::from_prob(slot_dist.no_arrival());
        let mut cond_acc = vec![S::zero(); entries.len()];
        let mut next: BTreeMap<StateKey, S> = BTreeMap::new();
        for ((state, tallies), p) in &dist {
            if !no_arrival.is_zero() {
                let key = (state.clone(), tallies.clone());
                let w = p.clone() * no_arrival.clone();
                let entry = next.entry(key).or_insert_with(S::zero);
                *entry = entry.clone() + w;
            }
            for (eidx, e) in entries.iter().enumerate() {
                let event_prob = S::from_prob(e.prob);
                for branch in policy.branches(state, slot, e.group, e.demand)? {
                    let w = p.clone() * event_prob.clone() * branch.prob.clone();
                    if branch.allocation > 0 {
                        let g = (e.group - 1) as usize;
                        expected_alloc[g] = expected_alloc[g].clone()
                            + w.clone() * S::from_int(u64::from(branch.allocation));
                        cond_acc[eidx] = cond_acc[eidx].clone()
                            + p.clone()
                                * branch.prob.clone()
                                * S::from_int(u64::from(branch.allocation));
                        if let (Some(units), Some(consumed)) =
                            (unit_alloc.as_mut(), branch.consumed.as_ref())
                        {
                            for u in consumed.iter() {
                                let cell = &mut units[(u - 1) as usize][g];
                                *cell = cell.clone() + w.clone();
                            }
                        }
                    }
                    let new_tallies = tallies.clone().map(|mut t| {
                        let g = (e.group - 1) as usize;
                        t[g].0 += branch.allocation;
                        t[g].1 += e.demand;
                        t
                    });
                    let entry = next
                        .entry((branch.state, new_tallies))
                        .or_insert_with(S::zero);
                    *entry = entry.clone() + w;
                }
            }
        }
        for (eidx, e) in entries.iter().enumerate() {
            conditionals.push((e.group, slot, e.demand, e.prob, cond_acc[eidx].clone()));
        }
        dist = next;
        max_states = max_states.max(dist.len() as u64);
    }

    let leaf_mass = dist
        .values()
        .fold(S::zero(), |acc, p| acc + p.clone())
        .to_f64();
    let leaf_count = dist.len() as u64;

    let fill_rate = opts.track_fill.then(|| {
        let mut fill = vec![S::zero(); n];
        for ((_, tallies), p) in &dist {
            let tallies = tallies.as_ref().expect("fill tracking keeps tallies");
            for (g, &(a, d)) in tallies.iter().enumerate() {
                let f = if d == 0 {
                    S::one()
                } else {
                    S::from_int(u64::from(a)) / S::from_int(u64::from(d))
                };
                fill[g] = fill[g].clone() + p.clone() * f;
            }
        }
        fill.iter().map(Scalar::to_f64).collect::<Vec<f64>>()
    });

    let mut rows = Vec::with_capacity(n);
    for g in 0..n {
        let group = g as u32 + 1;
        let beta = instance.priority(group);
        let expected_demand: S = instance.expected_demand_in(group);
        let included = !expected_demand.is_zero();
        let fe = included.then(|| {
            (expected_alloc[g].clone() / (S::from_prob(beta) * expected_demand.clone()))
                .to_f64()
        });
        rows.push(FairnessRow {
            group,
            beta,
            mean_alloc: expected_alloc[g].to_f64(),
            mean_demand: expected_demand.to_f64(),
            fe_fr_beta: fe,
            se: None,
            ci_lo: None,
            ci_hi: None,
            fill_rate: fill_rate.as_ref().map(|f| f[g]),
            included,
        });
    }
    let min_fe_fr_beta = rows
        .iter()
        .filter(|r| r.included)
        .filter_map(|r| r.fe_fr_beta)
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.min(v))));

    Ok(ExactReport {
        rows,
        min_fe_fr_beta,
        bounds: bounds(instance),
        conditionals: conditionals
            .into_iter()
            .map(|(group, slot, demand, prob, mean)| CondRow {
                group,
                slot,
                demand,
                arrival_prob: prob,
                mean_alloc: mean.to_f64(),
            })
            .collect(),
        budget_dist: budget_dist
            .into_iter()
            .map(|row| row.iter().map(Scalar::to_f64).collect())
            .collect(),
        unit_alloc_prob: unit_alloc
            .map(|units| units.into_iter().map(|row| row.iter().map(Scalar::to_f64).collect()).collect()),
        fill_rate,
        leaf_mass,
        leaf_count,
        max_states,
    })
}
