//! Discrete-time simulation of the station.
//!
//! Within a period: observe the state, let the policy pick `(k, w)`, serve
//! `k` demands from the head of the demand queue, pay for grid energy, update
//! the battery with this period's renewable energy, enqueue this period's EV
//! arrivals (each owing a random number of blocks), then draw the next
//! arrival, renewable and price states.

use rayon::prelude::*;

use crate::chain::{BatchLaw, ExogenousChains};
use crate::error::{Error, Result};
use crate::mdp::{grid_cost, MdpModel, ModelParams, SystemState};
use crate::policies::{Observation, Policy};
use crate::queue::DualQueue;
use crate::rng::Streams;
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct SimConfig<T> {
    pub params: ModelParams<T>,
    pub chains: ExogenousChains<T>,
    /// EVs waiting at period 0.
    pub initial_queue: u64,
    pub initial_battery: u64,
    /// Exclude the first 1% of periods from the averages.
    pub warmup: bool,
    pub keep_trace: bool,
}

impl<T: Scalar> SimConfig<T> {
    pub fn new(params: ModelParams<T>, chains: ExogenousChains<T>) -> Self {
        Self { params, chains, initial_queue: 0, initial_battery: 0, warmup: false, keep_trace: false }
    }

    /// Station of a finite model, started in `initial`.
    pub fn from_model(model: &MdpModel<T>, initial: &SystemState) -> Result<Self> {
        let ch = &model.chains;
        let chains = ExogenousChains::new(
            ch.arrivals.clone().with_initial(initial.a)?,
            ch.renewables.clone().with_initial(initial.e_a)?,
            ch.prices.clone().with_initial(initial.p)?,
        );
        let mut cfg = Self::new(model.params.clone(), chains);
        cfg.initial_queue = initial.q;
        cfg.initial_battery = initial.e_b;
        Ok(cfg)
    }
}

/// One simulated period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodRecord<T> {
    pub period: u64,
    /// EVs waiting at the start of the period.
    pub q: u64,
    /// Demands waiting at the start of the period.
    pub q_e: u64,
    /// EVs arriving this period.
    pub a: u64,
    /// Demands arriving this period.
    pub a_demand: u64,
    pub e_b: u64,
    pub e_a: u64,
    pub price: T,
    pub k: u64,
    pub battery_draw: u64,
    pub w: T,
    pub cost: T,
    /// Queue beyond the policy's table bound.
    pub clamped: bool,
}

/// Long-run averages of one run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub periods: u64,
    pub mean_cost: f64,
    pub mean_ev_queue: f64,
    pub mean_demand_queue: f64,
    pub max_period_cost: f64,
    pub clamps: u64,
}

/// Summary plus the per-period records when requested.
#[derive(Debug, Clone)]
pub struct SimulationTrace<T> {
    pub summary: Summary,
    pub records: Vec<PeriodRecord<T>>,
    /// Per-period costs and demand-queue lengths, kept for batch means.
    pub(crate) series: Option<(Vec<f64>, Vec<f64>)>,
}

/// Mutable state of one replication.
pub struct Engine<'a, T: Scalar> {
    config: &'a SimConfig<T>,
    law: BatchLaw,
    queue: DualQueue,
    a: usize,
    e_b: u64,
    e_a: usize,
    p: usize,
    period: u64,
    streams: Streams,
}

impl<'a, T: Scalar> Engine<'a, T> {
    pub fn new(config: &'a SimConfig<T>, seed: u64, replication: u64) -> Result<Self> {
        config.params.validate()?;
        if let Some(cap) = config.params.e_max {
            if config.initial_battery > cap {
                return Err(Error::InvalidArgument("initial battery exceeds capacity".into()));
            }
        }
        let law = BatchLaw::new(config.params.max_blocks)?;
        let mut streams = Streams::new(seed, replication);
        let mut queue = DualQueue::new();
        queue.enqueue_arrivals(config.initial_queue, law, 0, &mut streams.batches);
        Ok(Self {
            config,
            law,
            queue,
            a: config.chains.arrivals.initial(),
            e_b: config.initial_battery,
            e_a: config.chains.renewables.initial(),
            p: config.chains.prices.initial(),
            period: 0,
            streams,
        })
    }

    /// State observed by the policy: the queue length is the demand queue.
    pub fn state(&self) -> SystemState {
        SystemState { q: self.queue.demand_len(), a: self.a, e_b: self.e_b, e_a: self.e_a, p: self.p }
    }

    pub fn queue(&self) -> &DualQueue {
        &self.queue
    }

    pub fn step(&mut self, policy: &dyn Policy<T>) -> Result<PeriodRecord<T>> {
        let ch = &self.config.chains;
        let prm = &self.config.params;
        let x = self.state();
        let price = T::of_u64(ch.prices.value(self.p));
        let act = policy.decide(&Observation { state: x, price }, prm);
        if act.k > x.q.min(prm.charge_points) || act.battery_draw > x.e_b {
            return Err(Error::InfeasibleAction {
                state: x.to_string(),
                reason: format!("policy {} chose k={} draw={}", policy.name(), act.k, act.battery_draw),
            });
        }
        let (ev_len, q_e) = self.queue.queue_lengths();
        let clamped = policy.queue_bound().is_some_and(|b| q_e > b);

        self.queue.serve_demands(act.k);
        let cost = grid_cost(act.k, act.battery_draw, price, prm);

        let e_a = ch.renewables.value(self.e_a);
        let refilled = self.e_b - act.battery_draw + e_a;
        self.e_b = prm.e_max.map_or(refilled, |cap| refilled.min(cap));

        let a = ch.arrivals.value(self.a);
        let a_demand = self.queue.enqueue_arrivals(a, self.law, self.period + 1, &mut self.streams.batches);

        self.a = ch.arrivals.sample_next(self.a, &mut self.streams.arrivals)?;
        self.e_a = ch.renewables.sample_next(self.e_a, &mut self.streams.renewables)?;
        self.p = ch.prices.sample_next(self.p, &mut self.streams.prices)?;

        let record = PeriodRecord {
            period: self.period,
            q: ev_len,
            q_e,
            a,
            a_demand,
            e_b: x.e_b,
            e_a,
            price,
            k: act.k,
            battery_draw: act.battery_draw,
            w: act.power(prm.tau),
            cost,
            clamped,
        };
        self.period += 1;
        Ok(record)
    }
}

fn run_inner<T: Scalar>(
    config: &SimConfig<T>,
    policy: &dyn Policy<T>,
    horizon: u64,
    seed: u64,
    replication: u64,
    keep_series: bool,
) -> Result<SimulationTrace<T>> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let mut engine = Engine::new(config, seed, replication)?;
    let skip = if config.warmup { horizon / 100 } else { 0 };
    let mut records = Vec::new();
    let mut series = keep_series.then(|| (Vec::new(), Vec::new()));
    let (mut cost, mut evq, mut dq, mut max_cost, mut clamps) = (0.0, 0.0, 0.0, 0.0f64, 0u64);
    for n in 0..horizon {
        let r = engine.step(policy)?;
        clamps += r.clamped as u64;
        if n >= skip {
            let c = r.cost.as_f64();
            cost += c;
            evq += r.q as f64;
            dq += r.q_e as f64;
            max_cost = max_cost.max(c);
            if let Some((cs, qs)) = series.as_mut() {
                cs.push(c);
                qs.push(r.q_e as f64);
            }
        }
        if config.keep_trace {
            records.push(r);
        }
    }
    let n = (horizon - skip) as f64;
    let summary = Summary {
        periods: horizon - skip,
        mean_cost: cost / n,
        mean_ev_queue: evq / n,
        mean_demand_queue: dq / n,
        max_period_cost: max_cost,
        clamps,
    };
    Ok(SimulationTrace { summary, records, series })
}

/// Simulates `horizon` periods of replication 0.
pub fn run<T: Scalar>(config: &SimConfig<T>, policy: &dyn Policy<T>, horizon: u64, seed: u64) -> Result<SimulationTrace<T>> {
    run_inner(config, policy, horizon, seed, 0, false)
}

pub(crate) fn run_with_series<T: Scalar>(
    config: &SimConfig<T>,
    policy: &dyn Policy<T>,
    horizon: u64,
    seed: u64,
    replication: u64,
) -> Result<SimulationTrace<T>> {
    run_inner(config, policy, horizon, seed, replication, true)
}

/// Independent replications `0..replications`, run in parallel; results are
/// in replication order.
pub fn run_replications<T: Scalar>(
    config: &SimConfig<T>,
    policy: &dyn Policy<T>,
    horizon: u64,
    replications: u64,
    seed: u64,
) -> Result<Vec<Summary>> {
    (0..replications)
        .into_par_iter()
        .map(|r| run_inner(config, policy, horizon, seed, r, false).map(|t| t.summary))
        .collect()
}
