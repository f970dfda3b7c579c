//! Constrained problem: minimise the mean queue length subject to a bound on
//! the mean cost, by searching the multiplier `beta` of the Lagrangian cost.

use std::io::Write;

use crate::error::{Error, Result};
use crate::eval::{evaluate_exact, evaluate_mixture_exact, evaluate_policy, Evaluation, MixedPolicy, MonteCarlo};
use crate::mdp::{solve_discounted, MdpModel, PolicyTable, SystemState, DEFAULT_TOLERANCE};
use crate::policies::TablePolicy;
use crate::scalar::Scalar;
use crate::sim::SimConfig;

/// How candidate policies are evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Evaluator {
    /// Exact long-run averages on the finite model.
    Exact,
    Simulation(MonteCarlo),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    /// Discount factor used for every candidate `beta`.
    pub alpha: f64,
    pub vi_tolerance: f64,
    pub vi_max_iters: usize,
    /// First upper bracket tried.
    pub beta_init: f64,
    pub beta_rel_tol: f64,
    pub max_doublings: usize,
    pub max_steps: usize,
    pub evaluator: Evaluator,
    /// Start state for evaluation; `None` means empty queue, empty battery
    /// and the chains' initial states.
    pub initial: Option<SystemState>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            alpha: 0.9999,
            vi_tolerance: DEFAULT_TOLERANCE,
            vi_max_iters: 1_000_000,
            beta_init: 1.0,
            beta_rel_tol: 1e-3,
            max_doublings: 60,
            max_steps: 100,
            evaluator: Evaluator::Exact,
            initial: None,
        }
    }
}

/// One evaluated multiplier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaPoint {
    pub beta: f64,
    pub eval: Evaluation,
}

#[derive(Debug, Clone)]
pub struct BetaSearchResult {
    pub beta_star: f64,
    /// Smallest-`beta` deterministic policy found meeting the bound.
    pub policy: PolicyTable,
    pub policy_eval: Evaluation,
    /// Randomisation between the two bracketing policies attaining the bound.
    pub mixture: Option<MixedPolicy>,
    /// Averages of the returned policy (the mixture when present).
    pub avg_cost_b: f64,
    pub avg_delay_d: f64,
    pub cost_halfwidth: f64,
    /// Every evaluated multiplier, sorted by `beta`.
    pub history: Vec<BetaPoint>,
}

impl BetaSearchResult {
    /// Writes the history as CSV.
    pub fn write_history<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["beta", "cost", "cost_halfwidth", "delay", "delay_halfwidth", "clamps"])?;
        for p in &self.history {
            let e = p.eval;
            out.write_record([
                p.beta.to_string(),
                e.cost.to_string(),
                e.cost_halfwidth.to_string(),
                e.delay.to_string(),
                e.delay_halfwidth.to_string(),
                e.clamps.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Checks a `beta`-sorted history: cost non-increasing and delay
/// non-decreasing, each up to the sum of the adjacent halfwidths.
pub fn history_is_monotone(history: &[BetaPoint]) -> bool {
    history.windows(2).all(|w| {
        let (a, b) = (w[0].eval, w[1].eval);
        let slack = 1e-9 * (1.0 + a.cost.abs().max(a.delay.abs()));
        b.cost <= a.cost + a.cost_halfwidth + b.cost_halfwidth + slack
            && b.delay + a.delay_halfwidth + b.delay_halfwidth + slack >= a.delay
    })
}

struct Searcher<'a, T: Scalar> {
    model: &'a MdpModel<T>,
    cfg: &'a SearchConfig,
    initial: SystemState,
    history: Vec<BetaPoint>,
}

impl<T: Scalar> Searcher<'_, T> {
    fn candidate(&mut self, beta: f64) -> Result<(PolicyTable, Evaluation)> {
        let params = self.model.params.with_beta(T::of(beta)).with_alpha(T::of(self.cfg.alpha));
        let m = self.model.with_params(params)?;
        let sol = solve_discounted(&m, self.cfg.vi_tolerance, self.cfg.vi_max_iters)?;
        let eval = match self.cfg.evaluator {
            Evaluator::Exact => evaluate_exact(&m, &sol.policy, &self.initial)?,
            Evaluator::Simulation(mc) => {
                let sim = SimConfig::from_model(&m, &self.initial)?;
                evaluate_policy(&TablePolicy::new(sol.policy.clone(), format!("beta={beta}")), &sim, mc)?
            }
        };
        self.history.push(BetaPoint { beta, eval });
        Ok((sol.policy, eval))
    }

    fn bracket_history(&self) -> String {
        self.history.iter().map(|p| format!("({}, {})", p.beta, p.eval.cost)).collect::<Vec<_>>().join(" ")
    }
}

/// Searches `beta` so that the Lagrangian-optimal policy meets the average
/// cost bound `cost_bound`. The `beta` and `alpha` of `model.params` are
/// ignored.
pub fn solve_constrained<T: Scalar>(model: &MdpModel<T>, cost_bound: f64, cfg: &SearchConfig) -> Result<BetaSearchResult> {
    if !(cost_bound > 0.0) {
        return Err(Error::InvalidArgument("cost bound must be positive".into()));
    }
    if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) || !(cfg.beta_init > 0.0) || !(cfg.beta_rel_tol > 0.0) {
        return Err(Error::InvalidArgument("search config out of range".into()));
    }
    let initial = cfg.initial.unwrap_or(SystemState {
        q: 0,
        a: model.chains.arrivals.initial(),
        e_b: 0,
        e_a: model.chains.renewables.initial(),
        p: model.chains.prices.initial(),
    });
    let mut s = Searcher { model, cfg, initial, history: Vec::new() };
    let meets = |e: &Evaluation| e.cost <= cost_bound;

    let (p0, e0) = s.candidate(0.0)?;
    if meets(&e0) {
        return Ok(finish(s, 0.0, p0, e0, None));
    }

    let mut lo = (0.0, p0, e0);
    let mut beta = cfg.beta_init;
    let mut hi = None;
    for _ in 0..=cfg.max_doublings {
        let (p, e) = s.candidate(beta)?;
        if meets(&e) {
            hi = Some((beta, p, e));
            break;
        }
        lo = (beta, p, e);
        beta *= 2.0;
    }
    let Some(mut hi) = hi else {
        return Err(Error::BetaSearch { steps: cfg.max_doublings, history: s.bracket_history() });
    };

    let mut steps = 0;
    while hi.0 - lo.0 > cfg.beta_rel_tol * hi.0 {
        // close enough: the bound is hit within the evaluation's resolution
        if cost_bound - hi.2.cost <= hi.2.cost_halfwidth && hi.2.cost_halfwidth > 0.0 {
            break;
        }
        if steps == cfg.max_steps {
            return Err(Error::BetaSearch { steps, history: s.bracket_history() });
        }
        steps += 1;
        let mid = 0.5 * (lo.0 + hi.0);
        let (p, e) = s.candidate(mid)?;
        if meets(&e) {
            hi = (mid, p, e);
        } else {
            lo = (mid, p, e);
        }
    }

    let (beta_hi, p_hi, e_hi) = hi;
    let (beta_lo, p_lo, e_lo) = lo;
    let mixture = (e_hi.cost < cost_bound - e_hi.cost_halfwidth && e_lo.cost > cost_bound).then(|| MixedPolicy {
        lo: p_lo,
        hi: p_hi.clone(),
        beta_lo,
        beta_hi,
        weight_lo: (cost_bound - e_hi.cost) / (e_lo.cost - e_hi.cost),
    });
    let mix_eval = match (&mixture, cfg.evaluator) {
        (Some(mix), Evaluator::Exact) => Some(evaluate_mixture_exact(model, mix, &s.initial)?),
        (Some(mix), Evaluator::Simulation(_)) => {
            let w = mix.weight_lo;
            Some(Evaluation {
                cost: w * e_lo.cost + (1.0 - w) * e_hi.cost,
                cost_halfwidth: w * e_lo.cost_halfwidth + (1.0 - w) * e_hi.cost_halfwidth,
                delay: w * e_lo.delay + (1.0 - w) * e_hi.delay,
                delay_halfwidth: w * e_lo.delay_halfwidth + (1.0 - w) * e_hi.delay_halfwidth,
                ev_delay: w * e_lo.ev_delay + (1.0 - w) * e_hi.ev_delay,
                clamps: e_lo.clamps + e_hi.clamps,
                max_period_cost: e_lo.max_period_cost.max(e_hi.max_period_cost),
            })
        }
        (None, _) => None,
    };
    let mut result = finish(s, beta_hi, p_hi, e_hi, mixture);
    if let Some(e) = mix_eval {
        result.avg_cost_b = e.cost;
        result.avg_delay_d = e.delay;
        result.cost_halfwidth = e.cost_halfwidth;
    }
    Ok(result)
}

fn finish<T: Scalar>(
    s: Searcher<'_, T>,
    beta: f64,
    policy: PolicyTable,
    eval: Evaluation,
    mixture: Option<MixedPolicy>,
) -> BetaSearchResult {
    let mut history = s.history;
    history.sort_by(|a, b| a.beta.total_cmp(&b.beta));
    BetaSearchResult {
        beta_star: beta,
        policy,
        policy_eval: eval,
        mixture,
        avg_cost_b: eval.cost,
        avg_delay_d: eval.delay,
        cost_halfwidth: eval.cost_halfwidth,
        history,
    }
}
