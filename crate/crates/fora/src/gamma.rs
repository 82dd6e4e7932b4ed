//! Forward dynamic program over the residual-budget distribution.
//!
//! For the randomized threshold policy the acceptance probability in slot
//! `t` for a demand of `j` units is `1 / ((1 + R) * gamma[t][j])`, where
//! `gamma[t][j] = E[min(B_t / j, 1)]` is taken over the budget `B_t` the
//! policy itself induces. The table is computed once per instance by a
//! forward pass: the budget starts at full capacity with probability one,
//! and each step propagates the distribution through the three ways a slot
//! can play out (an accepted arrival shrinking the budget, a rejected
//! arrival, or no arrival). `gamma[t][j] >= 1 / (1 + R)` always holds, so
//! the acceptance probabilities are valid. The pass costs `O(T N K^2)`.

use crate::model::Instance;
use crate::scalar::Scalar;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GammaError {
    #[error("calibration requires unit priorities; group {group} has priority {priority}")]
    NonUnitPriorities { group: u32, priority: f64 },
}

/// Residual-budget distributions `P(B_t = b)` and calibration values
/// `gamma[t][j]`, both for `t` in `1..=T`. Immutable once computed.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaTable<S = f64> {
    budget_dist: Vec<Vec<S>>,
    gamma: Vec<Vec<S>>,
    load_used: S,
    capacity: u32,
}

impl<S: Scalar> GammaTable<S> {
    pub fn horizon(&self) -> u32 {
        self.budget_dist.len() as u32
    }

    pub fn capacity(&self) -> u32 {
        self.capacity
    }

    /// The load `R` the recursion was run with.
    pub fn load_used(&self) -> &S {
        &self.load_used
    }

    /// `P(B_t = b)` for `b` in `0..=K`, at the start of slot `t`.
    pub fn budget_row(&self, slot: u32) -> &[S] {
        &self.budget_dist[(slot - 1) as usize]
    }

    pub fn gamma(&self, slot: u32, demand: u32) -> &S {
        &self.gamma[(slot - 1) as usize][(demand - 1) as usize]
    }

    pub fn gamma_row(&self, slot: u32) -> &[S] {
        &self.gamma[(slot - 1) as usize]
    }

    /// Acceptance probability `1 / ((1 + R) * gamma[t][j])`, clamped into
    /// `[0, 1]`: the table may sit at the boundary `1 / (1 + R)` up to
    /// rounding and must never yield a probability above one.
    pub fn acceptance_prob(&self, slot: u32, demand: u32) -> S {
        let denom = (S::one() + self.load_used.clone()) * self.gamma(slot, demand).clone();
        (S::one() / denom).clamp01()
    }

    /// `E[B_t]` under the policy's own budget distribution.
    pub fn expected_budget(&self, slot: u32) -> S {
        self.budget_row(slot)
            .iter()
            .enumerate()
            .fold(S::zero(), |acc, (b, p)| {
                acc + S::from_int(b as u64) * p.clone()
            })
    }
}

/// Runs the calibration recursion in `f64`.
pub fn compute_gamma(instance: &Instance) -> Result<GammaTable, GammaError> {
    compute_gamma_in::<f64>(instance)
}

/// Runs the calibration recursion in any [`Scalar`]; rational arithmetic
/// makes the table exact over the stored probabilities.
pub fn compute_gamma_in<S: Scalar>(instance: &Instance) -> Result<GammaTable<S>, GammaError> {
    for (idx, &beta) in instance.priorities().iter().enumerate() {
        if beta != 1.0 {
            return Err(GammaError::NonUnitPriorities {
                group: idx as u32 + 1,
                priority: beta,
            });
        }
    }

    let k = instance.capacity() as usize;
    let t_max = instance.horizon() as usize;
    let load: S = instance.unit_load_in();
    let one_plus_r = S::one() + load.clone();

    // Per-slot demand masses `sum_i p_{itj}` and the no-arrival residual.
    let slot_mass = |slot: u32| -> (Vec<S>, S) {
        let dist = instance.slot_dist(slot);
        let mut mass = vec![S::zero(); k + 1]; // index by demand, 1..=K
        for e in dist.entries() {
            mass[e.demand as usize] = mass[e.demand as usize].clone() + S::from_prob(e.prob);
        }
        (mass, S::from_prob(dist.no_arrival()))
    };

    let mut budget_dist: Vec<Vec<S>> = Vec::with_capacity(t_max);
    let mut gamma: Vec<Vec<S>> = Vec::with_capacity(t_max);

    let mut first = vec![S::zero(); k + 1];
    first[k] = S::one();
    budget_dist.push(first);
    gamma.push(vec![S::one(); k]);

    for t in 1..t_max {
        let (mass, no_arrival) = slot_mass(t as u32);
        let prev_dist = &budget_dist[t - 1];
        let prev_gamma = &gamma[t - 1];

        // Acceptance probability per demand size in the previous slot.
        let accept: Vec<S> = (1..=k)
            .map(|j| {
                (S::one() / (one_plus_r.clone() * prev_gamma[j - 1].clone())).clamp01()
            })
            .collect();
        let stay_mass = (1..=k).fold(no_arrival, |acc, j| {
            acc + (S::one() - accept[j - 1].clone()) * mass[j].clone()
        });

        let mut row = vec![S::zero(); k + 1];
        let mut occupied = S::zero();
        for kp in 1..=k {
            let mut p = prev_dist[kp].clone() * stay_mass.clone();
            // Drops from above: an accepted demand of exactly the gap size.
            for (offset, p_from) in prev_dist[kp + 1..=k].iter().enumerate() {
                let gap = offset + 1;
                if !mass[gap].is_zero() {
                    p = p + p_from.clone() * mass[gap].clone() * accept[gap - 1].clone();
                }
            }
            occupied = occupied + p.clone();
            row[kp] = p;
        }
        // The zero level is the residual, floored to absorb rounding.
        row[0] = (S::one() - occupied).max_zero();

        let mut grow = vec![S::zero(); k];
        for j in 1..=k {
            let mut g = S::zero();
            for (b, p) in row.iter().enumerate() {
                if b >= j {
                    g = g + p.clone();
                } else {
                    g = g + S::from_int(b as u64) * p.clone() / S::from_int(j as u64);
                }
            }
            grow[j - 1] = g;
        }

        budget_dist.push(row);
        gamma.push(grow);
    }

    Ok(GammaTable {
        budget_dist,
        gamma,
        load_used: load,
        capacity: instance.capacity(),
    })
}
