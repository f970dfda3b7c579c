//! The `simulate`, `solve` and `audit` commands.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use evsched::conditions::{audit, CheckStatus};
use evsched::mdp::{read_policy, read_values, solve_discounted, write_policy, write_values};
use evsched::{
    estimate, run, solve_constrained, vanishing_discount_limit, Evaluation, Evaluator, MonteCarlo, SearchConfig, SimConfig,
    TablePolicy,
};

use crate::config::{format_value, Config, ConfigSource, EvaluatorKind, SolveMode};

/// One simulated configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub config_hash: String,
    pub seed: u64,
    pub policy: String,
    pub curve: String,
    pub sweep_key: String,
    pub sweep_value: String,
    pub horizon: u64,
    pub replications: u64,
    pub eval: Evaluation,
}

fn create_dir(out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))
}

fn writer(out: &Path, name: &str) -> Result<csv::Writer<fs::File>> {
    let path = out.join(name);
    csv::Writer::from_path(&path).with_context(|| format!("cannot write {}", path.display()))
}

fn eval_fields(e: &Evaluation) -> [String; 7] {
    [
        e.cost.to_string(),
        e.cost_halfwidth.to_string(),
        e.ev_delay.to_string(),
        e.delay.to_string(),
        e.delay_halfwidth.to_string(),
        e.clamps.to_string(),
        e.max_period_cost.to_string(),
    ]
}

const EVAL_HEADER: [&str; 7] = ["cost", "cost_halfwidth", "ev_queue", "demand_queue", "delay_halfwidth", "clamps", "max_period_cost"];

fn write_summary(out: &Path, rows: &[RunRow]) -> Result<()> {
    let mut w = writer(out, "summary.csv")?;
    let head = ["config_hash", "seed", "policy", "curve", "sweep_key", "sweep_value", "horizon", "replications"];
    w.write_record(head.iter().chain(EVAL_HEADER.iter()))?;
    for r in rows {
        let fixed = [
            r.config_hash.clone(),
            r.seed.to_string(),
            r.policy.clone(),
            r.curve.clone(),
            r.sweep_key.clone(),
            r.sweep_value.clone(),
            r.horizon.to_string(),
            r.replications.to_string(),
        ];
        w.write_record(fixed.iter().chain(eval_fields(&r.eval).iter()))?;
    }
    w.flush()?;
    Ok(())
}

fn write_sweep(out: &Path, rows: &[RunRow]) -> Result<()> {
    let mut w = writer(out, "sweep.csv")?;
    w.write_record(["curve", "sweep_key", "sweep_value"].iter().chain(EVAL_HEADER.iter()))?;
    for r in rows {
        let fixed = [r.curve.clone(), r.sweep_key.clone(), r.sweep_value.clone()];
        w.write_record(fixed.iter().chain(eval_fields(&r.eval).iter()))?;
    }
    w.flush()?;
    Ok(())
}

fn write_trace(out: &Path, cfg: &SimConfig<f64>, policy: &dyn evsched::Policy<f64>, horizon: u64, seed: u64) -> Result<()> {
    let t = run(cfg, policy, horizon, seed)?;
    let mut w = writer(out, "trace.csv")?;
    w.write_record(["period", "q", "q_e", "a", "a_demand", "e_b", "e_a", "p", "k", "w", "cost", "clamped"])?;
    for r in &t.records {
        w.write_record([
            r.period.to_string(),
            r.q.to_string(),
            r.q_e.to_string(),
            r.a.to_string(),
            r.a_demand.to_string(),
            r.e_b.to_string(),
            r.e_a.to_string(),
            r.price.to_string(),
            r.k.to_string(),
            r.w.to_string(),
            r.cost.to_string(),
            (r.clamped as u8).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn resolve(src: &ConfigSource) -> Result<Config> {
    src.resolve().map_err(|e| anyhow::anyhow!("{e}"))
}

fn simulate_point(src: &ConfigSource, curve: &str, key: &str, value: &str) -> Result<RunRow> {
    let cfg = resolve(src)?;
    let sim = cfg.sim_config()?;
    let policy = cfg.policy(src.base_dir())?;
    let s = &cfg.simulate;
    let eval = estimate(policy.as_ref(), &sim, MonteCarlo { horizon: s.horizon, replications: s.replications, seed: s.seed })?;
    Ok(RunRow {
        config_hash: cfg.hash(),
        seed: s.seed,
        policy: policy.name(),
        curve: curve.to_string(),
        sweep_key: key.to_string(),
        sweep_value: value.to_string(),
        horizon: s.horizon,
        replications: s.replications,
        eval,
    })
}

/// Runs the configured simulation (every curve and sweep point) and writes
/// `summary.csv`, plus `sweep.csv` for sweeps and `trace.csv` when requested
/// for a single run.
pub fn cmd_simulate(src: &ConfigSource, out: &Path) -> Result<Vec<RunRow>> {
    let base = resolve(src)?;
    create_dir(out)?;
    let s = &base.simulate;
    let curves = if s.curves.is_empty() { vec![String::new()] } else { s.curves.clone() };
    let key = s.sweep_key.clone().unwrap_or_default();
    let values: Vec<Option<String>> =
        if s.sweep_key.is_some() { s.sweep_values.iter().map(|&v| Some(format_value(v))).collect() } else { vec![None] };
    let points: Vec<(String, Option<String>)> =
        curves.iter().flat_map(|c| values.iter().map(move |v| (c.clone(), v.clone()))).collect();

    let rows = points
        .par_iter()
        .map(|(curve, value)| {
            let mut extra: Vec<String> = curve.split(',').map(str::trim).filter(|o| !o.is_empty()).map(String::from).collect();
            if let Some(v) = value {
                extra.push(format!("{key}={v}"));
            }
            simulate_point(&src.point(&extra), curve, &key, value.as_deref().unwrap_or(""))
                .with_context(|| format!("curve `{curve}`, {key} = {}", value.as_deref().unwrap_or("-")))
        })
        .collect::<Result<Vec<_>>>()?;

    for r in rows.iter().filter(|r| r.eval.clamps > 0) {
        eprintln!("warning: {} clamp events (curve `{}`, {} = {})", r.eval.clamps, r.curve, r.sweep_key, r.sweep_value);
    }
    write_summary(out, &rows)?;
    if s.sweep_key.is_some() {
        write_sweep(out, &rows)?;
    }
    if s.trace && points.len() == 1 {
        let sim = base.sim_config()?;
        let policy = base.policy(src.base_dir())?;
        write_trace(out, &sim, policy.as_ref(), s.horizon, s.seed)?;
    }
    Ok(rows)
}

/// What `solve` produced.
#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub files: Vec<PathBuf>,
    pub clamps: u64,
    pub warnings: Vec<String>,
}

fn write_kv(out: &Path, name: &str, pairs: &[(&str, String)]) -> Result<PathBuf> {
    let mut w = writer(out, name)?;
    w.write_record(["key", "value"])?;
    for (k, v) in pairs {
        w.write_record([*k, v.as_str()])?;
    }
    w.flush()?;
    Ok(out.join(name))
}

/// Solves the configured MDP and writes the tables.
///
/// `discounted`: `policy.csv`, `values.csv`, `solve.csv` and a validation
/// simulation of the table policy in `summary.csv`. `constrained`: the
/// smallest-`beta` feasible `policy.csv`, `beta_history.csv`,
/// `constrained.csv` and, when mixing is needed, `policy_lo.csv` and
/// `policy_hi.csv`. `limit`: `limits.csv`, `limit.csv` and the policy at the
/// last discount factor.
pub fn cmd_solve(src: &ConfigSource, out: &Path) -> Result<SolveOutcome> {
    let cfg = resolve(src)?;
    let model = cfg.model().context("the configured station is not a finite MDP")?;
    create_dir(out)?;
    let sv = &cfg.solver;
    let sim = &cfg.simulate;
    let mut files = Vec::new();
    let mut warnings = Vec::new();
    let mut clamps = 0;
    match sv.mode {
        SolveMode::Discounted => {
            let sol = solve_discounted(&model, sv.tolerance, sv.max_iters)?;
            write_policy(&out.join("policy.csv"), &sol.policy)?;
            write_values(&out.join("values.csv"), &sol.values)?;
            files.extend([out.join("policy.csv"), out.join("values.csv")]);
            files.push(write_kv(out, "solve.csv", &[
                ("iterations", sol.iterations.to_string()),
                ("last_span", sol.last_span.to_string()),
                ("config_hash", cfg.hash()),
            ])?);
            let table = TablePolicy::new(sol.policy, "solved");
            let eval = estimate(&table, &cfg.sim_config()?, MonteCarlo { horizon: sim.horizon, replications: sim.replications, seed: sim.seed })?;
            clamps = eval.clamps;
            let row = RunRow {
                config_hash: cfg.hash(),
                seed: sim.seed,
                policy: "solved".into(),
                curve: String::new(),
                sweep_key: String::new(),
                sweep_value: String::new(),
                horizon: sim.horizon,
                replications: sim.replications,
                eval,
            };
            write_summary(out, &[row])?;
            files.push(out.join("summary.csv"));
        }
        SolveMode::Constrained => {
            let evaluator = match sv.evaluator {
                EvaluatorKind::Exact => Evaluator::Exact,
                EvaluatorKind::Simulation => {
                    Evaluator::Simulation(MonteCarlo { horizon: sim.horizon, replications: sim.replications, seed: sim.seed })
                }
            };
            let search = SearchConfig {
                alpha: *sv.schedule.last().expect("validated non-empty"),
                vi_tolerance: sv.tolerance,
                vi_max_iters: sv.max_iters,
                beta_init: sv.beta_init,
                beta_rel_tol: sv.beta_rel_tol,
                max_steps: sv.max_steps,
                evaluator,
                initial: Some(evsched::SystemState {
                    q: cfg.model.initial_queue.min(cfg.model.q_max),
                    a: cfg.chains.arrivals.initial,
                    e_b: cfg.model.initial_battery,
                    e_a: cfg.chains.renewables.initial,
                    p: cfg.chains.prices.initial,
                }),
                ..SearchConfig::default()
            };
            let r = solve_constrained(&model, cfg.model.cost_bound, &search)?;
            clamps = r.history.iter().map(|p| p.eval.clamps).sum();
            write_policy(&out.join("policy.csv"), &r.policy)?;
            files.push(out.join("policy.csv"));
            r.write_history(fs::File::create(out.join("beta_history.csv"))?)?;
            files.push(out.join("beta_history.csv"));
            let mut kv = vec![
                ("beta_star", r.beta_star.to_string()),
                ("avg_cost_b", r.avg_cost_b.to_string()),
                ("avg_delay_d", r.avg_delay_d.to_string()),
                ("cost_halfwidth", r.cost_halfwidth.to_string()),
                ("policy_cost", r.policy_eval.cost.to_string()),
                ("policy_delay", r.policy_eval.delay.to_string()),
                ("config_hash", cfg.hash()),
            ];
            if let Some(mix) = &r.mixture {
                write_policy(&out.join("policy_lo.csv"), &mix.lo)?;
                write_policy(&out.join("policy_hi.csv"), &mix.hi)?;
                files.extend([out.join("policy_lo.csv"), out.join("policy_hi.csv")]);
                kv.extend([
                    ("beta_lo", mix.beta_lo.to_string()),
                    ("beta_hi", mix.beta_hi.to_string()),
                    ("weight_lo", mix.weight_lo.to_string()),
                ]);
            }
            files.push(write_kv(out, "constrained.csv", &kv)?);
        }
        SolveMode::Limit => {
            let lim = vanishing_discount_limit(&model, &sv.schedule, sv.tolerance, sv.max_iters)?;
            if let Some(w) = &lim.warning {
                warnings.push(w.clone());
            }
            write_policy(&out.join("policy.csv"), lim.policies.last().expect("non-empty schedule"))?;
            files.push(out.join("policy.csv"));
            let mut w = writer(out, "limits.csv")?;
            w.write_record(["q", "a", "e_b", "e_a", "p", "u", "eta", "z1", "z2", "z3", "z", "relative_value"])?;
            let opt = |z: Option<f64>| z.map(|v| v.to_string()).unwrap_or_default();
            for e in &lim.entries {
                let x = e.state;
                w.write_record([
                    x.q.to_string(),
                    x.a.to_string(),
                    x.e_b.to_string(),
                    x.e_a.to_string(),
                    x.p.to_string(),
                    e.action.u.to_string(),
                    e.action.eta.to_string(),
                    opt(e.z1),
                    opt(e.z2),
                    opt(e.z3),
                    opt(e.z),
                    e.relative_value.to_string(),
                ])?;
            }
            w.flush()?;
            files.push(out.join("limits.csv"));
            files.push(write_kv(out, "limit.csv", &[
                ("stabilized_alpha", lim.schedule[lim.stabilized_at].to_string()),
                ("stable", lim.stable().to_string()),
                ("average_cost", lim.average_cost.to_string()),
                ("estimate_change", lim.estimate_change.to_string()),
                ("config_hash", cfg.hash()),
            ])?);
        }
    }
    if clamps > 0 {
        warnings.push(format!("{clamps} truncation clamp events while evaluating the solved policy"));
    }
    Ok(SolveOutcome { files, clamps, warnings })
}

/// Counts from an audit run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AuditOutcome {
    pub states: usize,
    pub overflow_violations: usize,
    pub sandwich_violations: usize,
    pub defined_checks: usize,
}

/// Audits a policy/value pair against the configured model and writes
/// `audit.csv` (one row per state and condition).
pub fn cmd_audit(src: &ConfigSource, policy: &Path, values: &Path, out: &Path) -> Result<AuditOutcome> {
    let cfg = resolve(src)?;
    let model = cfg.model().context("the configured station is not a finite MDP")?;
    let dims = model.dims();
    let policy = read_policy(policy, dims)?;
    let values = read_values::<f64>(values, dims)?;
    let a = audit(&model, &values, &policy)?;
    create_dir(out)?;
    let mut w = writer(out, "audit.csv")?;
    w.write_record(["q", "a", "e_b", "e_a", "p", "u", "eta", "check", "left", "threshold", "right", "status"])?;
    let opt = |z: Option<f64>| z.map(|v| v.to_string()).unwrap_or_default();
    for r in &a.reports {
        let x = r.state;
        let head = [x.q, x.a as u64, x.e_b, x.e_a as u64, x.p as u64, r.action.u, r.action.eta].map(|v| v.to_string());
        let overflow = if a.overflow_violations.contains(&x) { CheckStatus::Violated } else { CheckStatus::Satisfied };
        w.write_record(head.iter().cloned().chain(["overflow".into(), String::new(), String::new(), String::new(), overflow.to_string()]))?;
        for c in &r.checks {
            w.write_record(head.iter().cloned().chain([
                c.name.to_string(),
                opt(c.left),
                c.threshold.to_string(),
                opt(c.right),
                c.status().to_string(),
            ]))?;
        }
    }
    w.flush()?;
    if a.reports.is_empty() {
        bail!("model has no states");
    }
    Ok(AuditOutcome {
        states: a.reports.len(),
        overflow_violations: a.overflow_violations.len(),
        sandwich_violations: a.violated_states().len(),
        defined_checks: a.defined_checks(),
    })
}
