//! `fora-sim`: validate instances, calibrate and simulate allocation
//! policies, evaluate them exactly, and reproduce the guarantee curves and
//! hard-instance audits.
//!
//! Exit codes: 0 success, 2 validation failure, 3 infeasible generator
//! parameters, 4 enumeration state space exceeded, 1 internal error.

use clap::{Args, Parser, Subcommand};
use fora::analysis::{
    audit_ceiling, exact_evaluate, hardgen, Arithmetic, AuditError, ExactError, ExactOptions,
    Family, HardInstance, InfeasibleParams,
};
use fora::gamma::compute_gamma;
use fora::model::{Instance, InstanceParseError, ValidationErrors};
use fora::policy::{Policy, PolicyError, PolicyKind};
use fora::report;
use fora::sim::{run_long_run, run_trials, SimError, SimOptions};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "fora-sim",
    version,
    about = "Fair online allocation of indivisible units: policies, simulation, exact evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct PolicyArgs {
    /// Policy name: threshold-unit, threshold-weighted, rcb, rcb-weighted,
    /// aon-lottery, aon-greedy, greedy-fcfs, denylist-greedy
    #[arg(long)]
    policy: String,
    /// Denied groups for denylist-greedy, e.g. --deny 2,5
    #[arg(long, value_delimiter = ',')]
    deny: Vec<u32>,
}

impl PolicyArgs {
    fn kind(&self) -> Result<PolicyKind, CliError> {
        Ok(PolicyKind::from_cli(&self.policy, &self.deny)?)
    }
}

#[derive(Args, Clone)]
struct FamilyArgs {
    /// Family name: general-tight, full-support, aon-general, aon-stationary
    family: String,
    /// Priority vector, e.g. --beta 0.5,1
    #[arg(long, value_delimiter = ',')]
    beta: Vec<f64>,
    /// Target priority-weighted load
    #[arg(long)]
    rho: Option<f64>,
    /// Family slack parameter
    #[arg(long)]
    eps: Option<f64>,
    /// Horizon
    #[arg(long)]
    t: Option<u32>,
    /// Capacity (general-tight and full-support; defaults to 4)
    #[arg(long, default_value_t = 4)]
    k: u32,
    /// Number of groups (general-tight; must match --beta length)
    #[arg(long)]
    n: Option<u32>,
}

impl FamilyArgs {
    fn family(&self) -> Result<Family, CliError> {
        let need = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| CliError::Usage(format!("--{name} is required for {}", self.family)))
        };
        let need_t = || {
            self.t
                .ok_or_else(|| CliError::Usage(format!("--t is required for {}", self.family)))
        };
        Ok(match self.family.as_str() {
            "general-tight" => {
                if let Some(n) = self.n {
                    if n as usize != self.beta.len() {
                        return Err(CliError::Usage(format!(
                            "--n {n} does not match {} priorities",
                            self.beta.len()
                        )));
                    }
                }
                Family::GeneralTight {
                    betas: self.beta.clone(),
                    rho: need(self.rho, "rho")?,
                    eps: need(self.eps, "eps")?,
                    horizon: need_t()?,
                    capacity: self.k,
                }
            }
            "full-support" => Family::FullSupport {
                betas: self.beta.clone(),
                rho: need(self.rho, "rho")?,
                eps: need(self.eps, "eps")?,
                horizon: need_t()?,
                capacity: self.k,
            },
            "aon-general" => Family::AonGeneral {
                eps: need(self.eps, "eps")?,
                horizon: need_t()?,
            },
            "aon-stationary" => Family::AonStationary {
                eps: need(self.eps, "eps")?,
            },
            other => {
                return Err(CliError::Usage(format!("unknown hard family '{other}'")));
            }
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Check an instance file against every model constraint
    Validate { instance: PathBuf },
    /// Emit the budget distribution and calibration table as CSV
    Gamma {
        instance: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Print the three guarantee levels at the instance's load
    Bounds { instance: PathBuf },
    /// Monte Carlo estimation of the fairness ratios
    Simulate {
        instance: PathBuf,
        #[command(flatten)]
        policy: PolicyArgs,
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also estimate per-(group, slot, demand) conditional allocations
        #[arg(long)]
        track_rfe_fr: bool,
        /// Also emit per-group expected fill rates
        #[arg(long)]
        fill_rate: bool,
        /// Worker threads (default: all cores, or FORA_SIM_WORKERS)
        #[arg(long)]
        workers: Option<usize>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Cumulative fairness ratio over many independent days
    Longrun {
        instance: PathBuf,
        #[command(flatten)]
        policy: PolicyArgs,
        #[arg(long, default_value_t = 100_000)]
        days: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Exact evaluation by full enumeration of the outcome tree
    Exact {
        instance: PathBuf,
        #[command(flatten)]
        policy: PolicyArgs,
        #[arg(long, default_value_t = 10_000_000)]
        state_limit: u64,
        /// Evaluate in exact rational arithmetic
        #[arg(long)]
        exact_rational: bool,
        /// Also compute exact expected fill rates (joint-tally tracking)
        #[arg(long)]
        track_fill_rate: bool,
        /// Also emit the exact conditional allocation expectations
        #[arg(long)]
        track_rfe_fr: bool,
        /// Also emit the per-slot budget distribution
        #[arg(long)]
        emit_budget_dist: bool,
        /// Also emit per-unit allocation probabilities (cyclic policies)
        #[arg(long)]
        emit_unit_probs: bool,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Generate a hard instance and write it as JSON
    Hardgen {
        #[command(flatten)]
        family: FamilyArgs,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Evaluate a policy on a hard instance and check the family ceiling
    Audit {
        #[command(flatten)]
        family: FamilyArgs,
        #[command(flatten)]
        policy: PolicyArgs,
        /// Use Monte Carlo with this many trials instead of exact evaluation
        #[arg(long)]
        trials: Option<u64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10_000_000)]
        state_limit: u64,
    },
    /// Emit the guarantee curves over a grid of loads and horizons
    Report {
        /// Load grid: comma list and/or lo:hi:step ranges
        #[arg(long, default_value = "0:5:0.1")]
        r_beta: String,
        /// Horizon grid: comma list
        #[arg(long, default_value = "1,2,5,10,100")]
        t: String,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

enum CliError {
    Usage(String),
    Parse(InstanceParseError),
    Policy(PolicyError),
    Sim(SimError),
    Infeasible(InfeasibleParams),
    StateSpace(ExactError),
    Audit(AuditError),
    Io(std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            // Bad inputs: files that fail validation, unusable flags.
            CliError::Usage(_) | CliError::Parse(_) | CliError::Policy(_) | CliError::Sim(_) => 2,
            CliError::Infeasible(_) => 3,
            CliError::StateSpace(ExactError::StateSpaceExceeded { .. }) => 4,
            CliError::StateSpace(_) => 2,
            CliError::Audit(_) | CliError::Io(_) => 1,
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Usage(m) => m.clone(),
            CliError::Parse(e) => e.to_string(),
            CliError::Policy(e) => e.to_string(),
            CliError::Sim(e) => e.to_string(),
            CliError::Infeasible(e) => e.to_string(),
            CliError::StateSpace(e) => e.to_string(),
            CliError::Audit(e) => e.to_string(),
            CliError::Io(e) => e.to_string(),
        }
    }
}

impl From<InstanceParseError> for CliError {
    fn from(e: InstanceParseError) -> Self {
        CliError::Parse(e)
    }
}

impl From<ValidationErrors> for CliError {
    fn from(e: ValidationErrors) -> Self {
        CliError::Parse(InstanceParseError::Invalid(e))
    }
}

impl From<PolicyError> for CliError {
    fn from(e: PolicyError) -> Self {
        CliError::Policy(e)
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        CliError::Sim(e)
    }
}

impl From<InfeasibleParams> for CliError {
    fn from(e: InfeasibleParams) -> Self {
        CliError::Infeasible(e)
    }
}

impl From<ExactError> for CliError {
    fn from(e: ExactError) -> Self {
        match e {
            ExactError::Policy(p) => CliError::Policy(p),
            other => CliError::StateSpace(other),
        }
    }
}

impl From<AuditError> for CliError {
    fn from(e: AuditError) -> Self {
        CliError::Audit(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

fn load_instance(path: &Path) -> Result<Instance, CliError> {
    let text = std::fs::read_to_string(path)?;
    Ok(Instance::from_json_str(&text)?)
}

fn write_out(path: Option<&PathBuf>, content: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, content)?,
        None => print!("{content}"),
    }
    Ok(())
}

fn worker_default(explicit: Option<usize>) -> Option<usize> {
    explicit.or_else(|| {
        std::env::var("FORA_SIM_WORKERS")
            .ok()
            .and_then(|v| v.parse().ok())
    })
}

/// Parses "0.5,1:2:0.25" style grid specs: comma-separated atoms, each a
/// number or an inclusive lo:hi:step range.
fn parse_grid(spec: &str) -> Result<Vec<f64>, CliError> {
    let bad = |s: &str| CliError::Usage(format!("cannot parse grid element '{s}'"));
    let mut values = Vec::new();
    for atom in spec.split(',').filter(|s| !s.is_empty()) {
        let parts: Vec<&str> = atom.split(':').collect();
        match parts.as_slice() {
            [one] => values.push(one.trim().parse().map_err(|_| bad(one))?),
            [lo, hi, step] => {
                let lo: f64 = lo.trim().parse().map_err(|_| bad(atom))?;
                let hi: f64 = hi.trim().parse().map_err(|_| bad(atom))?;
                let step: f64 = step.trim().parse().map_err(|_| bad(atom))?;
                if step <= 0.0 {
                    return Err(bad(atom));
                }
                let n = ((hi - lo) / step + 1e-9).floor() as u64;
                for i in 0..=n {
                    values.push(lo + step * i as f64);
                }
            }
            _ => return Err(bad(atom)),
        }
    }
    Ok(values)
}

fn evaluate_hard_min(
    hard: &HardInstance,
    kind: &PolicyKind,
    trials: Option<u64>,
    seed: u64,
    state_limit: u64,
) -> Result<(f64, &'static str), CliError> {
    match trials {
        None => {
            let rep = exact_evaluate(
                &hard.instance,
                kind,
                &ExactOptions {
                    state_limit,
                    ..ExactOptions::default()
                },
            )?;
            let min = rep.min_fe_fr_beta.ok_or_else(|| {
                CliError::Usage("no group with positive expected demand to audit".into())
            })?;
            Ok((min, "exact"))
        }
        Some(trials) => {
            let policy = Policy::build(kind.clone(), &hard.instance)?;
            let rep = run_trials(
                &hard.instance,
                &policy,
                &SimOptions {
                    trials,
                    seed,
                    ..SimOptions::default()
                },
            );
            let min = rep.min_fe_fr_beta.ok_or_else(|| {
                CliError::Usage("no group with positive expected demand to audit".into())
            })?;
            Ok((min, "monte-carlo"))
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Validate { instance } => {
            load_instance(&instance)?;
            println!("ok");
        }
        Command::Gamma { instance, output } => {
            let inst = load_instance(&instance)?;
            let table = compute_gamma(&inst).map_err(PolicyError::from)?;
            write_out(output.as_ref(), &report::gamma_csv(&table))?;
        }
        Command::Bounds { instance } => {
            let inst = load_instance(&instance)?;
            let load = inst.load_summary();
            let b = fora::analysis::bounds(&inst);
            println!("r_beta {}", load.r_beta);
            println!("t {}", inst.horizon());
            println!("general {}", b.general);
            println!("stationary_exact {}", b.stationary_exact);
            println!("stationary_floor {}", b.stationary_floor);
        }
        Command::Simulate {
            instance,
            policy,
            trials,
            seed,
            track_rfe_fr,
            fill_rate,
            workers,
            output,
        } => {
            let inst = load_instance(&instance)?;
            let built = Policy::build(policy.kind()?, &inst)?;
            let rep = run_trials(
                &inst,
                &built,
                &SimOptions {
                    trials,
                    seed,
                    track_rfe: track_rfe_fr,
                    workers: worker_default(workers),
                },
            );
            let mut out = report::fairness_csv(&rep.rows, &rep.bounds, None);
            if let Some(rfe) = &rep.rfe {
                out.push('\n');
                out.push_str(&report::rfe_csv(rfe));
            }
            if fill_rate {
                out.push('\n');
                out.push_str(&report::fill_rate_csv(&rep.rows));
            }
            write_out(output.as_ref(), &out)?;
        }
        Command::Longrun {
            instance,
            policy,
            days,
            seed,
            output,
        } => {
            let inst = load_instance(&instance)?;
            let built = Policy::build(policy.kind()?, &inst)?;
            let trace = run_long_run(&inst, &built, days, seed)?;
            write_out(output.as_ref(), &report::trace_csv(&trace))?;
        }
        Command::Exact {
            instance,
            policy,
            state_limit,
            exact_rational,
            track_fill_rate,
            track_rfe_fr,
            emit_budget_dist,
            emit_unit_probs,
            output,
        } => {
            let inst = load_instance(&instance)?;
            let rep = exact_evaluate(
                &inst,
                &policy.kind()?,
                &ExactOptions {
                    state_limit,
                    arithmetic: if exact_rational {
                        Arithmetic::Rational
                    } else {
                        Arithmetic::Float
                    },
                    track_fill: track_fill_rate,
                },
            )?;
            let mut out = report::fairness_csv(&rep.rows, &rep.bounds, Some("exact"));
            if track_rfe_fr {
                out.push('\n');
                out.push_str(&report::conditional_csv(&rep.conditionals));
            }
            if track_fill_rate {
                out.push('\n');
                out.push_str(&report::fill_rate_csv(&rep.rows));
            }
            if emit_budget_dist {
                out.push('\n');
                out.push_str(&report::budget_dist_csv(&rep.budget_dist));
            }
            if emit_unit_probs {
                if let Some(units) = &rep.unit_alloc_prob {
                    out.push('\n');
                    out.push_str(&report::unit_prob_csv(units));
                }
            }
            write_out(output.as_ref(), &out)?;
        }
        Command::Hardgen { family, output } => {
            let hard = hardgen(&family.family()?)?;
            write_out(output.as_ref(), &hard.instance.to_json_string())?;
            if output.is_some() {
                eprintln!(
                    "r_beta {} ceiling {}",
                    hard.instance.load_summary().r_beta,
                    hard.ceiling
                );
            }
        }
        Command::Audit {
            family,
            policy,
            trials,
            seed,
            state_limit,
        } => {
            let hard = hardgen(&family.family()?)?;
            let kind = policy.kind()?;
            let (observed, method) = evaluate_hard_min(&hard, &kind, trials, seed, state_limit)?;
            match audit_ceiling(&hard, &kind, observed) {
                Ok(outcome) => {
                    println!(
                        "PASS {} min_fe_fr_beta {} <= {} ceiling {} ({method})",
                        policy.policy, outcome.observed_min, outcome.ceiling_kind, outcome.ceiling
                    );
                }
                Err(err) => {
                    println!("FAIL {} ({method})", policy.policy);
                    return Err(err.into());
                }
            }
        }
        Command::Report { r_beta, t, output } => {
            let loads = parse_grid(&r_beta)?;
            let horizons: Result<Vec<u32>, CliError> = t
                .split(',')
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.trim()
                        .parse()
                        .map_err(|_| CliError::Usage(format!("cannot parse horizon '{s}'")))
                })
                .collect();
            write_out(output.as_ref(), &report::curves_csv(&loads, &horizons?))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message());
            ExitCode::from(err.exit_code())
        }
    }
}
