//! CSV renderers for every report the tooling emits.
//!
//! All values are plain numeric fields (no quoting needed); floats print in
//! shortest round-trip form so identical runs produce identical bytes.
//! Cells that do not apply (excluded groups, exact evaluations without
//! standard errors) stay empty, with the `flag` column reading `n/a`.

use crate::analysis::{bounds_at, BoundSet, CondRow};
use crate::gamma::GammaTable;
use crate::sim::{LongRunTrace, RfeRow};
use std::fmt::Write;

/// One group's fairness figures, shared by Monte Carlo and exact reports.
#[derive(Debug, Clone, PartialEq)]
pub struct FairnessRow {
    pub group: u32,
    pub beta: f64,
    pub mean_alloc: f64,
    pub mean_demand: f64,
    pub fe_fr_beta: Option<f64>,
    pub se: Option<f64>,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
    pub fill_rate: Option<f64>,
    /// Whether the group counts toward fairness (positive expected demand).
    pub included: bool,
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// The main per-group report. `source`, when given, appends a constant
/// trailing column (exact evaluations use `source=exact`). A final `min`
/// row restates the minimum over included groups next to the bounds.
pub fn fairness_csv(rows: &[FairnessRow], bounds: &BoundSet, source: Option<&str>) -> String {
    let mut out = String::new();
    out.push_str("group,beta,mean_alloc,mean_demand,fe_fr_beta,se,ci_lo,ci_hi,bound_general,bound_stationary,flag");
    if source.is_some() {
        out.push_str(",source");
    }
    out.push('\n');
    let suffix = source.map(|s| format!(",{s}")).unwrap_or_default();
    for r in rows {
        // `n/a` whenever no ratio can be reported: the group is excluded
        // (zero expected demand) or no demand materialized in the run.
        let flag = if r.fe_fr_beta.is_some() { "ok" } else { "n/a" };
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}{}",
            r.group,
            r.beta,
            r.mean_alloc,
            r.mean_demand,
            opt(r.fe_fr_beta),
            opt(r.se),
            opt(r.ci_lo),
            opt(r.ci_hi),
            bounds.general,
            bounds.stationary_exact,
            flag,
            suffix
        )
        .unwrap();
    }
    let min = rows
        .iter()
        .filter(|r| r.included)
        .filter_map(|r| r.fe_fr_beta)
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.min(v))));
    writeln!(
        out,
        "min,,,,{},,,,{},{},{}{}",
        opt(min),
        bounds.general,
        bounds.stationary_exact,
        if min.is_some() { "ok" } else { "n/a" },
        suffix
    )
    .unwrap();
    out
}

/// Per-group expected fill rates (`E[F_i]`, the `D_i = 0 -> 1` diagnostic).
pub fn fill_rate_csv(rows: &[FairnessRow]) -> String {
    let mut out = String::from("group,fill_rate\n");
    for r in rows {
        writeln!(out, "{},{}", r.group, opt(r.fill_rate)).unwrap();
    }
    out
}

/// Monte Carlo conditional allocation estimates per arrival cell.
pub fn rfe_csv(rows: &[RfeRow]) -> String {
    let mut out = String::from("group,t,j,arrivals,mean_alloc,se,ci_lo,ci_hi\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.group, r.slot, r.demand, r.arrivals, r.mean_alloc, r.se, r.ci_lo, r.ci_hi
        )
        .unwrap();
    }
    out
}

/// Exact conditional allocation expectations per arrival cell.
pub fn conditional_csv(rows: &[CondRow]) -> String {
    let mut out = String::from("group,t,j,arrival_prob,mean_alloc\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.group, r.slot, r.demand, r.arrival_prob, r.mean_alloc
        )
        .unwrap();
    }
    out
}

/// Budget distribution and calibration table, 17 significant digits:
/// a `t,b,prob` block followed by a `t,j,gamma` block.
pub fn gamma_csv(table: &GammaTable) -> String {
    let mut out = String::from("t,b,prob\n");
    for t in 1..=table.horizon() {
        for (b, p) in table.budget_row(t).iter().enumerate() {
            writeln!(out, "{t},{b},{p:.16e}").unwrap();
        }
    }
    out.push_str("\nt,j,gamma\n");
    for t in 1..=table.horizon() {
        for j in 1..=table.capacity() {
            writeln!(out, "{t},{j},{:.16e}", table.gamma(t, j)).unwrap();
        }
    }
    out
}

/// Budget distribution rows from an exact evaluation.
pub fn budget_dist_csv(budget_dist: &[Vec<f64>]) -> String {
    let mut out = String::from("t,b,prob\n");
    for (idx, row) in budget_dist.iter().enumerate() {
        for (b, p) in row.iter().enumerate() {
            writeln!(out, "{},{},{}", idx + 1, b, p).unwrap();
        }
    }
    out
}

/// Per-unit allocation probabilities from an exact cyclic evaluation.
pub fn unit_prob_csv(unit_alloc_prob: &[Vec<f64>]) -> String {
    let mut out = String::from("unit,group,prob\n");
    for (u, row) in unit_alloc_prob.iter().enumerate() {
        for (g, p) in row.iter().enumerate() {
            writeln!(out, "{},{},{}", u + 1, g + 1, p).unwrap();
        }
    }
    out
}

/// Long-run cumulative ratio trace.
pub fn trace_csv(trace: &LongRunTrace) -> String {
    let mut out = String::from("day,group,cumulative_ratio\n");
    for p in &trace.points {
        writeln!(out, "{},{},{}", p.day, p.group, p.ratio).unwrap();
    }
    out
}

/// Guarantee curves over a grid of loads and horizons.
pub fn curves_csv(r_betas: &[f64], horizons: &[u32]) -> String {
    let mut out = String::from("r_beta,t,general,stationary_exact,stationary_floor\n");
    for &r in r_betas {
        for &t in horizons {
            let b = bounds_at(r, t);
            writeln!(
                out,
                "{},{},{},{},{}",
                r, t, b.general, b.stationary_exact, b.stationary_floor
            )
            .unwrap();
        }
    }
    out
}
