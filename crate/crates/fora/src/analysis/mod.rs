//! Analytic guarantee curves, exact enumeration, hard instance families,
//! and upper-bound audits.

mod exact;
mod hardgen;

pub use exact::{exact_evaluate, Arithmetic, CondRow, ExactError, ExactOptions, ExactReport};
pub use hardgen::{fill_rate_pathology, hardgen, Family, HardInstance, InfeasibleParams};

use crate::model::Instance;
use thiserror::Error;

/// The three guarantee levels at a given load.
///
/// `general` holds for arbitrary time-varying arrivals; `stationary_exact`
/// is the exact finite-horizon level attainable under time-invariant
/// arrivals, and `stationary_floor` is its horizon-free lower bound. All
/// three equal 1 at zero load.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundSet {
    pub general: f64,
    pub stationary_exact: f64,
    pub stationary_floor: f64,
}

/// `1 / (1 + r)`.
pub fn general_bound(r_beta: f64) -> f64 {
    1.0 / (1.0 + r_beta)
}

/// `(1 - (1 - r/T)^T) / r`, read as 1 at `r = 0`. The base is floored at
/// zero so the expression stays a probability even when `r > T` (where no
/// time-invariant instance exists and the nominal formula leaves `[0, 1]`).
pub fn stationary_exact_bound(r_beta: f64, horizon: u32) -> f64 {
    if r_beta == 0.0 {
        return 1.0;
    }
    let miss_one_slot = (1.0 - r_beta / f64::from(horizon)).max(0.0);
    let miss_all = if horizon <= i32::MAX as u32 {
        miss_one_slot.powi(horizon as i32)
    } else {
        miss_one_slot.powf(f64::from(horizon))
    };
    // The ratio is a probability over the load and never exceeds 1; the
    // min shaves off float noise at the boundary.
    ((1.0 - miss_all) / r_beta).min(1.0)
}

/// `(1 - e^{-r}) / r`, read as 1 at `r = 0`.
pub fn stationary_floor_bound(r_beta: f64) -> f64 {
    if r_beta == 0.0 {
        1.0
    } else {
        -f64::exp_m1(-r_beta) / r_beta
    }
}

pub fn bounds_at(r_beta: f64, horizon: u32) -> BoundSet {
    BoundSet {
        general: general_bound(r_beta),
        stationary_exact: stationary_exact_bound(r_beta, horizon),
        stationary_floor: stationary_floor_bound(r_beta),
    }
}

/// Bounds evaluated at an instance's priority-weighted load and horizon.
pub fn bounds(instance: &Instance) -> BoundSet {
    bounds_at(instance.load_summary().r_beta, instance.horizon())
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AuditError {
    /// A policy evaluation exceeded a proven ceiling: some computation in
    /// the pipeline is wrong.
    #[error(
        "min FE-FR-beta {observed} exceeds the family ceiling {ceiling}: \
         this certifies a bug in the policy, oracle, or generator"
    )]
    CeilingViolated { observed: f64, ceiling: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditOutcome {
    pub observed_min: f64,
    pub ceiling: f64,
    /// Which ceiling bound: `family`, `all-or-nothing`, `stationary`, or
    /// `coverage`.
    pub ceiling_kind: &'static str,
}

/// Upper bound on the fairness of any policy on this instance from
/// coverage alone: the whole budget is spent only if some request arrives,
/// so summing the per-group fairness inequalities gives
/// `alpha <= (1 - prod_t P(no arrival in t)) / r_beta`.
pub fn coverage_ceiling(instance: &Instance) -> f64 {
    let r_beta = instance.load_summary().r_beta;
    if r_beta == 0.0 {
        return 1.0;
    }
    let mut all_quiet = 1.0;
    for t in 1..=instance.horizon() {
        all_quiet *= instance.slot_dist(t).no_arrival();
    }
    ((1.0 - all_quiet) / r_beta).min(1.0)
}

/// The ceiling a hard instance proves for the given policy.
///
/// The tight families bound every online policy. The all-or-nothing
/// families bound only all-or-nothing policies at `1/T`; cyclic policies
/// on their (time-invariant) instances are held to the stationary level,
/// and anything else to the coverage bound.
pub fn ceiling_for(hard: &HardInstance, kind: &crate::policy::PolicyKind) -> (f64, &'static str) {
    use crate::policy::PolicyKind;
    match &hard.family {
        Family::GeneralTight { .. } | Family::FullSupport { .. } => (hard.ceiling, "family"),
        Family::AonGeneral { .. } | Family::AonStationary { .. } => match kind {
            PolicyKind::AonLottery | PolicyKind::AonGreedy => (hard.ceiling, "all-or-nothing"),
            PolicyKind::Rcb | PolicyKind::RcbWeighted
                if hard.instance.is_time_invariant() =>
            {
                let load = hard.instance.load_summary();
                (
                    stationary_exact_bound(load.r_beta, hard.instance.horizon()),
                    "stationary",
                )
            }
            _ => (coverage_ceiling(&hard.instance), "coverage"),
        },
    }
}

/// Checks an evaluated minimum group fairness against the ceiling its hard
/// instance family proves for the policy's class.
pub fn audit_ceiling(
    hard: &HardInstance,
    kind: &crate::policy::PolicyKind,
    observed_min: f64,
) -> Result<AuditOutcome, AuditError> {
    let (ceiling, ceiling_kind) = ceiling_for(hard, kind);
    if observed_min <= ceiling + 1e-9 {
        Ok(AuditOutcome {
            observed_min,
            ceiling,
            ceiling_kind,
        })
    } else {
        Err(AuditError::CeilingViolated {
            observed: observed_min,
            ceiling,
        })
    }
}
