//! Long-run average cost `B` and queue length `D` of a policy.
//!
//! Two evaluators: Monte Carlo over independent replications (any policy,
//! any station) and an exact one for table policies on the finite model,
//! which follows the state distribution from the initial state to its limit.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mdp::{MdpModel, PolicyTable, SystemState};
use crate::policies::{Policy, TablePolicy};
use crate::rng::{stream, StreamId};
use crate::scalar::Scalar;
use crate::sim::{run_with_series, SimConfig, Summary};

/// Minimum horizon for Monte Carlo evaluation.
pub const MIN_HORIZON: u64 = 10_000;

const Z_95: f64 = 1.959_963_984_540_054;
const BATCHES: usize = 20;

/// Estimated long-run averages. Halfwidths are 95% normal-approximation
/// confidence halfwidths (zero for exact evaluation).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub cost: f64,
    pub cost_halfwidth: f64,
    /// Mean demand queue length.
    pub delay: f64,
    pub delay_halfwidth: f64,
    pub ev_delay: f64,
    /// Periods where the queue exceeded a table policy's bound.
    pub clamps: u64,
    /// Largest single-period cost seen (zero for exact evaluation).
    pub max_period_cost: f64,
}

impl Evaluation {
    pub fn clamped(&self) -> bool {
        self.clamps > 0
    }
}

/// Monte Carlo settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MonteCarlo {
    pub horizon: u64,
    pub replications: u64,
    pub seed: u64,
}

fn mean_halfwidth(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::INFINITY);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, Z_95 * (var / n).sqrt())
}

fn batch_means(xs: &[f64]) -> Vec<f64> {
    let size = xs.len() / BATCHES;
    if size == 0 {
        return vec![xs.iter().sum::<f64>() / xs.len() as f64];
    }
    xs.chunks_exact(size).take(BATCHES).map(|c| c.iter().sum::<f64>() / size as f64).collect()
}

/// Evaluates `policy` by simulation. With one replication the halfwidth
/// comes from batch means over the run.
pub fn evaluate_policy<T: Scalar>(policy: &dyn Policy<T>, config: &SimConfig<T>, mc: MonteCarlo) -> Result<Evaluation> {
    if mc.horizon < MIN_HORIZON {
        return Err(Error::InvalidArgument(format!("horizon must be at least {MIN_HORIZON}")));
    }
    estimate(policy, config, mc)
}

/// As [`evaluate_policy`] without the minimum horizon; short runs get wide
/// (possibly infinite) halfwidths.
pub fn estimate<T: Scalar>(policy: &dyn Policy<T>, config: &SimConfig<T>, mc: MonteCarlo) -> Result<Evaluation> {
    evaluate_with(config, mc, |_| policy)
}

fn evaluate_with<'p, T: Scalar>(
    config: &SimConfig<T>,
    mc: MonteCarlo,
    pick: impl (Fn(u64) -> &'p dyn Policy<T>) + Sync,
) -> Result<Evaluation> {
    if mc.replications == 0 {
        return Err(Error::InvalidArgument("at least one replication is required".into()));
    }
    let runs = (0..mc.replications)
        .into_par_iter()
        .map(|r| run_with_series(config, pick(r), mc.horizon, mc.seed, r))
        .collect::<Result<Vec<_>>>()?;
    let summaries: Vec<Summary> = runs.iter().map(|t| t.summary).collect();
    let (cost, cost_hw, delay, delay_hw) = if runs.len() == 1 {
        let (cs, qs) = runs[0].series.as_ref().expect("series requested");
        let (_, chw) = mean_halfwidth(&batch_means(cs));
        let (_, dhw) = mean_halfwidth(&batch_means(qs));
        (summaries[0].mean_cost, chw, summaries[0].mean_demand_queue, dhw)
    } else {
        let (c, chw) = mean_halfwidth(&summaries.iter().map(|s| s.mean_cost).collect::<Vec<_>>());
        let (d, dhw) = mean_halfwidth(&summaries.iter().map(|s| s.mean_demand_queue).collect::<Vec<_>>());
        (c, chw, d, dhw)
    };
    let n = summaries.len() as f64;
    Ok(Evaluation {
        cost,
        cost_halfwidth: cost_hw,
        delay,
        delay_halfwidth: delay_hw,
        ev_delay: summaries.iter().map(|s| s.mean_ev_queue).sum::<f64>() / n,
        clamps: summaries.iter().map(|s| s.clamps).sum(),
        max_period_cost: summaries.iter().map(|s| s.max_period_cost).fold(0.0, f64::max),
    })
}

/// Two deterministic policies mixed once per trajectory: `lo` is followed
/// with probability `weight_lo`, `hi` otherwise. Long-run averages are then
/// the weighted averages of the two.
#[derive(Debug, Clone)]
pub struct MixedPolicy {
    pub lo: PolicyTable,
    pub hi: PolicyTable,
    pub beta_lo: f64,
    pub beta_hi: f64,
    pub weight_lo: f64,
}

impl MixedPolicy {
    /// Which component replication `replication` follows.
    pub fn follows_lo(&self, seed: u64, replication: u64) -> bool {
        stream(seed, replication, StreamId::Mixture).gen::<f64>() < self.weight_lo
    }
}

/// Simulated evaluation of a mixture; each replication draws its component.
pub fn evaluate_mixture<T: Scalar>(mix: &MixedPolicy, config: &SimConfig<T>, mc: MonteCarlo) -> Result<Evaluation> {
    let lo = TablePolicy::new(mix.lo.clone(), "mixture-lo");
    let hi = TablePolicy::new(mix.hi.clone(), "mixture-hi");
    if mc.horizon < MIN_HORIZON {
        return Err(Error::InvalidArgument(format!("horizon must be at least {MIN_HORIZON}")));
    }
    evaluate_with(config, mc, |r| if mix.follows_lo(mc.seed, r) { &lo as &dyn Policy<T> } else { &hi })
}

/// Exact long-run averages of `policy` on the finite model started in
/// `initial`.
///
/// Iterates the lazy chain `(I + P)/2`, whose state distribution converges to
/// the Cesàro limit of `P` even for periodic or multichain policies.
pub fn evaluate_exact<T: Scalar>(model: &MdpModel<T>, policy: &PolicyTable, initial: &SystemState) -> Result<Evaluation> {
    let dims = model.dims();
    if policy.dims() != dims {
        return Err(Error::Dimension("policy table does not match the model".into()));
    }
    if !dims.contains(initial) {
        return Err(Error::InvalidArgument(format!("initial state {initial} is outside the model")));
    }
    let n = dims.n_states();
    let mut cost = vec![0.0; n];
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
    for (i, x) in dims.states().enumerate() {
        let t = policy.get(&x);
        cost[i] = model.stage_cost(&x, &t.to_action(&x))?.as_f64();
        rows.push(
            model
                .next_state_distribution(&x, &t)
                .into_iter()
                .filter(|(_, p)| *p > T::zero())
                .map(|(y, p)| (dims.index(&y), p.as_f64()))
                .collect(),
        );
    }
    let mut dist = vec![0.0; n];
    dist[dims.index(initial)] = 1.0;
    let mut next = vec![0.0; n];
    let max_iters = 50_000_000 / n.max(1) + 100_000;
    for _ in 0..max_iters {
        next.iter_mut().zip(&dist).for_each(|(y, &x)| *y = 0.5 * x);
        for (i, row) in rows.iter().enumerate() {
            let w = 0.5 * dist[i];
            if w != 0.0 {
                for &(j, p) in row {
                    next[j] += w * p;
                }
            }
        }
        let change: f64 = next.iter().zip(&dist).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut dist, &mut next);
        if change < 1e-14 {
            let b = dist.iter().zip(&cost).map(|(p, c)| p * c).sum();
            let d = dims.states().zip(&dist).map(|(x, p)| p * x.q as f64).sum();
            return Ok(Evaluation { cost: b, cost_halfwidth: 0.0, delay: d, delay_halfwidth: 0.0, ev_delay: d, clamps: 0, max_period_cost: 0.0 });
        }
    }
    Err(Error::NotConverged { iterations: max_iters, last_span: f64::NAN })
}

/// Exact evaluation of a trajectory-level mixture.
pub fn evaluate_mixture_exact<T: Scalar>(model: &MdpModel<T>, mix: &MixedPolicy, initial: &SystemState) -> Result<Evaluation> {
    let lo = evaluate_exact(model, &mix.lo, initial)?;
    let hi = evaluate_exact(model, &mix.hi, initial)?;
    let w = mix.weight_lo;
    let d = w * lo.delay + (1.0 - w) * hi.delay;
    Ok(Evaluation {
        cost: w * lo.cost + (1.0 - w) * hi.cost,
        cost_halfwidth: 0.0,
        delay: d,
        delay_halfwidth: 0.0,
        ev_delay: d,
        clamps: 0,
        max_period_cost: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{ExogenousChains, IidSpec, MarkovChain};
    use crate::mdp::{ModelParams, TransformedAction};
    use crate::policies::{RadicalPolicy, ServeNone};

    fn tiny() -> MdpModel<f64> {
        let params = ModelParams {
            charge_points: 2,
            block_energy: 1,
            tau: 1.0,
            e_max: Some(2),
            q_max: 4,
            beta: 0.0,
            alpha: 0.9,
            cost_bound: f64::INFINITY,
            max_blocks: 1,
            energy_filter: true,
        };
        let two = |a, b| MarkovChain::new(vec![a, b], vec![vec![0.7, 0.3], vec![0.4, 0.6]], 0).unwrap();
        MdpModel::new(params, ExogenousChains::new(two(0, 1), two(0, 1), two(1, 2))).unwrap()
    }

    #[test]
    fn serve_none_without_arrivals_is_free_and_empty() {
        let mut cfg = SimConfig::new(ModelParams::<f64>::station(8, Some(100)), ExogenousChains::new(
            MarkovChain::constant(0),
            MarkovChain::from_iid(&IidSpec::new(vec![0, 50], vec![0.5, 0.5]).unwrap()).unwrap(),
            MarkovChain::constant(10),
        ));
        cfg.initial_battery = 0;
        let e = evaluate_policy(&ServeNone, &cfg, MonteCarlo { horizon: 10_000, replications: 2, seed: 1 }).unwrap();
        assert_eq!((e.cost, e.delay, e.clamps), (0.0, 0.0, 0));
    }

    #[test]
    fn short_horizon_is_rejected() {
        let cfg = SimConfig::new(ModelParams::<f64>::station(8, Some(100)), ExogenousChains::new(
            MarkovChain::constant(0),
            MarkovChain::constant(0),
            MarkovChain::constant(10),
        ));
        assert!(evaluate_policy(&ServeNone, &cfg, MonteCarlo { horizon: 100, replications: 1, seed: 1 }).is_err());
    }

    #[test]
    fn exact_matches_simulation_on_table_policy() {
        let m = tiny();
        let table = PolicyTable::from_fn(m.dims(), |x| {
            let act = crate::policies::radical_policy(x, &m.params);
            TransformedAction::from_action(x, &act)
        });
        let init = SystemState::new(0, 0, 0, 0, 0);
        let exact = evaluate_exact(&m, &table, &init).unwrap();
        let mut cfg = SimConfig::new(m.params.clone(), m.chains.clone());
        cfg.initial_queue = 0;
        let sim = evaluate_policy(&RadicalPolicy, &cfg, MonteCarlo { horizon: 200_000, replications: 8, seed: 3 }).unwrap();
        assert!((sim.cost - exact.cost).abs() < 3.0 * sim.cost_halfwidth + 1e-3, "{sim:?} {exact:?}");
        assert!((sim.delay - exact.delay).abs() < 3.0 * sim.delay_halfwidth + 1e-3, "{sim:?} {exact:?}");
    }

    #[test]
    fn exact_handles_absorbing_policies() {
        let m = tiny();
        let none = PolicyTable::from_fn(m.dims(), |x| TransformedAction::new(x.q, x.e_b));
        let e = evaluate_exact(&m, &none, &SystemState::new(0, 0, 0, 0, 0)).unwrap();
        assert_eq!(e.cost, 0.0);
        assert!((e.delay - 4.0).abs() < 1e-9);
    }

    #[test]
    fn mixture_weights_average() {
        let m = tiny();
        let none = PolicyTable::from_fn(m.dims(), |x| TransformedAction::new(x.q, x.e_b));
        let all = PolicyTable::from_fn(m.dims(), |x| {
            TransformedAction::from_action(x, &crate::policies::radical_policy(x, &m.params))
        });
        let mix = MixedPolicy { lo: all.clone(), hi: none.clone(), beta_lo: 0.0, beta_hi: 1.0, weight_lo: 0.25 };
        let init = SystemState::new(0, 0, 0, 0, 0);
        let e = evaluate_mixture_exact(&m, &mix, &init).unwrap();
        let a = evaluate_exact(&m, &all, &init).unwrap();
        assert!((e.cost - 0.25 * a.cost).abs() < 1e-12);
        let hits = (0..10_000).filter(|&r| mix.follows_lo(9, r)).count();
        assert!((hits as f64 / 10_000.0 - 0.25).abs() < 0.02);
    }

    #[test]
    fn batch_means_halfwidth_for_single_replication() {
        let m = tiny();
        let cfg = SimConfig::new(m.params.clone(), m.chains.clone());
        let e = evaluate_policy(&RadicalPolicy, &cfg, MonteCarlo { horizon: 20_000, replications: 1, seed: 4 }).unwrap();
        assert!(e.cost_halfwidth.is_finite() && e.cost_halfwidth > 0.0);
    }
}
