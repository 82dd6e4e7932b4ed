//! Shared instance generators for the integration suites.
//!
//! Each suite compiles its own copy, so not every helper is used by every
//! target.
#![allow(dead_code)]

use fora::model::Instance;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Random sparse arrival cells for one slot: total mass strictly below 1,
/// duplicates allowed (they accumulate).
fn random_cells(rng: &mut ChaCha8Rng, capacity: u32, groups: u32) -> Vec<(u32, u32, f64)> {
    let max_cells = (groups * capacity).min(6);
    let m = rng.random_range(1..=max_cells);
    let raw: Vec<(u32, u32, f64)> = (0..m)
        .map(|_| {
            (
                rng.random_range(1..=groups),
                rng.random_range(1..=capacity),
                rng.random::<f64>(),
            )
        })
        .collect();
    let total: f64 = raw.iter().map(|c| c.2).sum();
    let target = rng.random::<f64>() * 0.95;
    raw.into_iter()
        .map(|(i, j, w)| (i, j, w / total * target))
        .collect()
}

/// A random valid instance with unit priorities, time-invariant or
/// time-varying with equal probability.
pub fn random_unit_instance(seed: u64, k_max: u32, t_max: u32, n_max: u32) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let capacity = rng.random_range(1..=k_max);
    let horizon = rng.random_range(1..=t_max);
    let groups = rng.random_range(1..=n_max);
    let betas = vec![1.0; groups as usize];
    if rng.random_bool(0.5) {
        let cells = random_cells(&mut rng, capacity, groups);
        Instance::time_invariant(capacity, horizon, &betas, &cells).unwrap()
    } else {
        let mut cells = Vec::new();
        for slot in 1..=horizon {
            for (i, j, p) in random_cells(&mut rng, capacity, groups) {
                cells.push((slot, i, j, p));
            }
        }
        Instance::time_varying(capacity, horizon, &betas, &cells).unwrap()
    }
}

/// A random valid *time-invariant* instance with unit priorities.
pub fn random_unit_invariant(seed: u64, k_max: u32, t_max: u32, n_max: u32) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let capacity = rng.random_range(1..=k_max);
    let horizon = rng.random_range(1..=t_max);
    let groups = rng.random_range(1..=n_max);
    let betas = vec![1.0; groups as usize];
    let cells = random_cells(&mut rng, capacity, groups);
    Instance::time_invariant(capacity, horizon, &betas, &cells).unwrap()
}

fn random_betas(rng: &mut ChaCha8Rng, groups: u32) -> Vec<f64> {
    let mut betas: Vec<f64> = (0..groups)
        .map(|_| 0.05 + 0.95 * rng.random::<f64>())
        .collect();
    let top = rng.random_range(0..groups) as usize;
    betas[top] = 1.0;
    betas
}

/// A random valid instance with heterogeneous priorities (max exactly 1).
pub fn random_weighted_instance(seed: u64, k_max: u32, t_max: u32, n_max: u32) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0xd134_2543_de82_ef95));
    let capacity = rng.random_range(1..=k_max);
    let horizon = rng.random_range(1..=t_max);
    let groups = rng.random_range(1..=n_max);
    let betas = random_betas(&mut rng, groups);
    if rng.random_bool(0.5) {
        let cells = random_cells(&mut rng, capacity, groups);
        Instance::time_invariant(capacity, horizon, &betas, &cells).unwrap()
    } else {
        let mut cells = Vec::new();
        for slot in 1..=horizon {
            for (i, j, p) in random_cells(&mut rng, capacity, groups) {
                cells.push((slot, i, j, p));
            }
        }
        Instance::time_varying(capacity, horizon, &betas, &cells).unwrap()
    }
}

/// A random valid *time-invariant* instance with heterogeneous priorities.
pub fn random_weighted_invariant(seed: u64, k_max: u32, t_max: u32, n_max: u32) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x2545_f491_4f6c_dd1d));
    let capacity = rng.random_range(1..=k_max);
    let horizon = rng.random_range(1..=t_max);
    let groups = rng.random_range(1..=n_max);
    let betas = random_betas(&mut rng, groups);
    let cells = random_cells(&mut rng, capacity, groups);
    Instance::time_invariant(capacity, horizon, &betas, &cells).unwrap()
}
