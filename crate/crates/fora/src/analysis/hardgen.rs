//! Generators for the instance families that certify the tightness of the
//! guarantees.
//!
//! Each family comes with the ceiling its construction proves: no online
//! policy (all-or-nothing policies, for the `Aon*` families) can push its
//! minimum group fairness above it on that instance.

use crate::model::Instance;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("infeasible parameters: {constraint}")]
pub struct InfeasibleParams {
    pub constraint: String,
}

fn infeasible(constraint: impl Into<String>) -> InfeasibleParams {
    InfeasibleParams {
        constraint: constraint.into(),
    }
}

/// Hard instance family and its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    /// Time-varying family with target weighted load `rho`: groups
    /// `1..N-1` (priorities `betas`) demand the full capacity during slots
    /// `1..T-1`; the top-priority group `N` arrives only in the final slot
    /// with probability `eps`. Forces any policy to trade early fairness
    /// against budget kept for the late arrival.
    GeneralTight {
        betas: Vec<f64>,
        rho: f64,
        eps: f64,
        horizon: u32,
        capacity: u32,
    },
    /// Time-invariant family with weighted load exactly `rho` and every
    /// `(group, demand)` probability strictly positive: one designated
    /// full-capacity cell carries almost all the mass, every other cell a
    /// sliver `lambda / T` with `lambda = rho * eps / Gamma`.
    FullSupport {
        betas: Vec<f64>,
        rho: f64,
        eps: f64,
        horizon: u32,
        capacity: u32,
    },
    /// `T` groups, one per slot, each demanding `K/2 + 1` units with
    /// certainty (`K` the smallest even integer at least `1/eps`). At most
    /// one request can ever be served in full.
    AonGeneral { eps: f64, horizon: u32 },
    /// Single group, two slots, each demanding `K/2 + 1` with certainty.
    AonStationary { eps: f64 },
}

/// A generated hard instance together with the ceiling its family proves.
#[derive(Debug, Clone, PartialEq)]
pub struct HardInstance {
    pub instance: Instance,
    pub ceiling: f64,
    /// The sliver weight used by the full-support family.
    pub lambda: Option<f64>,
    pub family: Family,
}

/// Smallest even integer at least `1/eps`, tolerating float noise in the
/// reciprocal.
fn even_capacity(eps: f64) -> u32 {
    let raw = 1.0 / eps;
    let near = raw.round();
    let base = if (raw - near).abs() < 1e-9 * near.max(1.0) {
        near
    } else {
        raw.ceil()
    } as u32;
    base + base % 2
}

fn check_betas(betas: &[f64]) -> Result<(), InfeasibleParams> {
    if betas.is_empty() {
        return Err(infeasible("at least one priority required"));
    }
    for (idx, &b) in betas.iter().enumerate() {
        if !b.is_finite() || b <= 0.0 || b > 1.0 {
            return Err(infeasible(format!(
                "priority of group {} must lie in (0, 1], got {b}",
                idx + 1
            )));
        }
    }
    Ok(())
}

pub fn hardgen(family: &Family) -> Result<HardInstance, InfeasibleParams> {
    match family {
        Family::GeneralTight {
            betas,
            rho,
            eps,
            horizon,
            capacity,
        } => general_tight(betas, *rho, *eps, *horizon, *capacity, family),
        Family::FullSupport {
            betas,
            rho,
            eps,
            horizon,
            capacity,
        } => full_support(betas, *rho, *eps, *horizon, *capacity, family),
        Family::AonGeneral { eps, horizon } => aon_general(*eps, *horizon, family),
        Family::AonStationary { eps } => aon_stationary(*eps, family),
    }
}

fn general_tight(
    betas: &[f64],
    rho: f64,
    eps: f64,
    horizon: u32,
    capacity: u32,
    family: &Family,
) -> Result<HardInstance, InfeasibleParams> {
    check_betas(betas)?;
    let n = betas.len() as u32;
    if n < 2 {
        return Err(infeasible("the family needs at least 2 groups"));
    }
    if *betas.last().unwrap() != 1.0 {
        return Err(infeasible("the last group must have priority exactly 1"));
    }
    if !rho.is_finite() || rho <= 0.0 {
        return Err(infeasible("rho must be positive"));
    }
    if !(eps > 0.0 && eps < 1.0_f64.min(rho)) {
        return Err(infeasible("eps must lie in (0, min(1, rho))"));
    }
    if horizon < 2 {
        return Err(infeasible("the horizon must be at least 2"));
    }
    if capacity < 1 {
        return Err(infeasible("capacity must be at least 1"));
    }
    let early_beta_sum: f64 = betas[..(n - 1) as usize].iter().sum();
    let per_early = (rho - eps) / (f64::from(horizon - 1) * early_beta_sum);
    if f64::from(n - 1) * per_early > 1.0 + 1e-12 {
        return Err(infeasible(format!(
            "per-slot mass (N-1)(rho-eps)/((T-1) sum beta) = {} exceeds 1; raise T",
            f64::from(n - 1) * per_early
        )));
    }
    let mut cells = Vec::new();
    for t in 1..horizon {
        for i in 1..n {
            cells.push((t, i, capacity, per_early));
        }
    }
    cells.push((horizon, n, capacity, eps));
    let instance = Instance::time_varying(capacity, horizon, betas, &cells)
        .map_err(|e| infeasible(format!("generated instance invalid: {e}")))?;
    Ok(HardInstance {
        instance,
        ceiling: 1.0 / (1.0 + rho - eps),
        lambda: None,
        family: family.clone(),
    })
}

fn full_support(
    betas: &[f64],
    rho: f64,
    eps: f64,
    horizon: u32,
    capacity: u32,
    family: &Family,
) -> Result<HardInstance, InfeasibleParams> {
    check_betas(betas)?;
    let n = betas.len() as u32;
    let top = betas
        .iter()
        .position(|&b| b == 1.0)
        .ok_or_else(|| infeasible("some group must have priority exactly 1"))?
        as u32
        + 1;
    if capacity < 1 {
        return Err(infeasible("capacity must be at least 1"));
    }
    if !(rho > 0.0 && rho < f64::from(horizon)) {
        return Err(infeasible("rho must lie in (0, T)"));
    }
    if !eps.is_finite() || eps <= 0.0 {
        return Err(infeasible("eps must be positive"));
    }

    // Weight and slack of every cell except the designated (top, K) one.
    let k = f64::from(capacity);
    let mut weight_sum = 0.0; // A
    let mut slack_sum = 0.0; // Gamma
    for i in 1..=n {
        for j in 1..=capacity {
            if (i, j) == (top, capacity) {
                continue;
            }
            let w = betas[(i - 1) as usize] * f64::from(j) / k;
            weight_sum += w;
            slack_sum += 1.0 - w;
        }
    }
    if slack_sum <= 0.0 {
        return Err(infeasible(
            "Gamma = 0: no cell besides the designated one exists",
        ));
    }
    let lambda = rho * eps / slack_sum;
    if rho - lambda * weight_sum <= 0.0 {
        return Err(infeasible(
            "lambda * A >= rho: eps too large for this shape",
        ));
    }
    if rho + lambda * slack_sum > f64::from(horizon) + 1e-12 {
        return Err(infeasible("rho (1 + eps) exceeds T"));
    }

    let t = f64::from(horizon);
    let mut cells = Vec::new();
    for i in 1..=n {
        for j in 1..=capacity {
            let p = if (i, j) == (top, capacity) {
                (rho - lambda * weight_sum) / t
            } else {
                lambda / t
            };
            cells.push((i, j, p));
        }
    }
    let instance = Instance::time_invariant(capacity, horizon, betas, &cells)
        .map_err(|e| infeasible(format!("generated instance invalid: {e}")))?;
    let boosted = rho + lambda * slack_sum;
    let ceiling = (1.0 - (1.0 - boosted / t).max(0.0).powi(horizon as i32)) / rho;
    Ok(HardInstance {
        instance,
        ceiling,
        lambda: Some(lambda),
        family: family.clone(),
    })
}

fn aon_general(
    eps: f64,
    horizon: u32,
    family: &Family,
) -> Result<HardInstance, InfeasibleParams> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(infeasible("eps must lie in (0, 1]"));
    }
    if horizon < 1 {
        return Err(infeasible("the horizon must be at least 1"));
    }
    let capacity = even_capacity(eps);
    let demand = capacity / 2 + 1;
    let betas = vec![1.0; horizon as usize];
    let cells: Vec<(u32, u32, u32, f64)> =
        (1..=horizon).map(|t| (t, t, demand, 1.0)).collect();
    let instance = Instance::time_varying(capacity, horizon, &betas, &cells)
        .map_err(|e| infeasible(format!("generated instance invalid: {e}")))?;
    Ok(HardInstance {
        instance,
        ceiling: 1.0 / f64::from(horizon),
        lambda: None,
        family: family.clone(),
    })
}

fn aon_stationary(eps: f64, family: &Family) -> Result<HardInstance, InfeasibleParams> {
    if !(eps > 0.0 && eps <= 0.25) {
        return Err(infeasible("eps must lie in (0, 0.25] so that K >= 4"));
    }
    let capacity = even_capacity(eps);
    let demand = capacity / 2 + 1;
    let instance = Instance::time_invariant(capacity, 2, &[1.0], &[(1, demand, 1.0)])
        .map_err(|e| infeasible(format!("generated instance invalid: {e}")))?;
    Ok(HardInstance {
        instance,
        ceiling: 0.5,
        lambda: None,
        family: family.clone(),
    })
}

/// The two-group instance exposing the weakness of per-realization fill
/// rates: group 1 demands one unit with certainty in slot 1, group 2
/// demands `capacity - 1` units in slot 2 with probability
/// `1 / (capacity - 1)`. Both groups have expected demand 1, yet a policy
/// can starve group 2 while its expected fill rate stays near 1.
pub fn fill_rate_pathology(capacity: u32) -> Instance {
    assert!(capacity >= 3);
    Instance::time_varying(
        capacity,
        2,
        &[1.0, 1.0],
        &[
            (1, 1, 1, 1.0),
            (2, 2, capacity - 1, 1.0 / f64::from(capacity - 1)),
        ],
    )
    .expect("pathology instance is valid")
}
