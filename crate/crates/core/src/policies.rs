//! Stationary deterministic policies usable by the simulator and the
//! evaluators: the two closed-form heuristics and table lookups.

use crate::mdp::{grid_cost, Action, ModelParams, PolicyTable, SystemState};
use crate::scalar::Scalar;

/// What a policy sees at the start of a period. `state.q` is the demand
/// queue length (equal to the EV count when every EV needs one block).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation<T> {
    pub state: SystemState,
    pub price: T,
}

pub trait Policy<T: Scalar>: Send + Sync {
    fn decide(&self, obs: &Observation<T>, params: &ModelParams<T>) -> Action;

    /// Largest queue length the policy can represent; longer queues are
    /// looked up at this bound and counted as truncation clamps.
    fn queue_bound(&self) -> Option<u64> {
        None
    }

    fn name(&self) -> String;
}

/// Charge as many EVs as possible, drawing greedily from the battery.
pub fn radical_policy<T: Scalar>(x: &SystemState, params: &ModelParams<T>) -> Action {
    let k = x.q.min(params.charge_points);
    Action { k, battery_draw: x.e_b.min(k * params.block_energy) }
}

/// Charge as many EVs as possible subject to the period's grid cost staying
/// within `cost_bound`, drawing greedily from the battery.
///
/// The count `(e_b + cost_bound * tau / p) / E` is floored. A zero price or
/// an infinite bound leave only `min(q, M)`.
pub fn conservative_policy<T: Scalar>(x: &SystemState, params: &ModelParams<T>, price: T, cost_bound: T) -> Action {
    let mut k = x.q.min(params.charge_points);
    if price > T::zero() && cost_bound.is_finite() {
        let affordable = (T::of_u64(x.e_b) + cost_bound * params.tau / price) / T::of_u64(params.block_energy);
        let cap = affordable.floor().to_u64().unwrap_or(u64::MAX);
        k = k.min(cap);
        // floor of a rounded quotient can overshoot by one
        while k > 0 && grid_cost(k, x.e_b.min(k * params.block_energy), price, params) > cost_bound {
            k -= 1;
        }
    }
    Action { k, battery_draw: x.e_b.min(k * params.block_energy) }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RadicalPolicy;

impl<T: Scalar> Policy<T> for RadicalPolicy {
    fn decide(&self, obs: &Observation<T>, params: &ModelParams<T>) -> Action {
        radical_policy(&obs.state, params)
    }

    fn name(&self) -> String {
        "radical".into()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConservativePolicy<T> {
    pub cost_bound: T,
}

impl<T: Scalar> Policy<T> for ConservativePolicy<T> {
    fn decide(&self, obs: &Observation<T>, params: &ModelParams<T>) -> Action {
        conservative_policy(&obs.state, params, obs.price, self.cost_bound)
    }

    fn name(&self) -> String {
        "conservative".into()
    }
}

/// Never charges.
#[derive(Debug, Clone, Copy, Default)]
pub struct ServeNone;

impl<T: Scalar> Policy<T> for ServeNone {
    fn decide(&self, _obs: &Observation<T>, _params: &ModelParams<T>) -> Action {
        Action::default()
    }

    fn name(&self) -> String {
        "serve-none".into()
    }
}

/// Lookup in a solved policy table. Queue and battery beyond the table are
/// clamped to its edge; the action is then capped to what is feasible.
#[derive(Debug, Clone)]
pub struct TablePolicy {
    pub table: PolicyTable,
    pub label: String,
}

impl TablePolicy {
    pub fn new(table: PolicyTable, label: impl Into<String>) -> Self {
        Self { table, label: label.into() }
    }
}

impl<T: Scalar> Policy<T> for TablePolicy {
    fn decide(&self, obs: &Observation<T>, params: &ModelParams<T>) -> Action {
        let d = self.table.dims();
        let x = obs.state;
        let lookup = SystemState { q: x.q.min(d.q_max), e_b: x.e_b.min(d.e_max), ..x };
        let act = self.table.action(&lookup);
        let k = act.k.min(x.q.min(params.charge_points));
        Action { k, battery_draw: act.battery_draw.min(x.e_b) }
    }

    fn queue_bound(&self) -> Option<u64> {
        Some(self.table.dims().q_max)
    }

    fn name(&self) -> String {
        self.label.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(m: u64) -> ModelParams<f64> {
        ModelParams::station(m, Some(300))
    }

    #[test]
    fn radical_examples() {
        let p = params(8);
        assert_eq!(radical_policy(&SystemState::new(3, 0, 25, 0, 0), &p), Action::new(3, 25));
        assert_eq!(radical_policy(&SystemState::new(0, 0, 25, 0, 0), &p), Action::new(0, 0));
        assert_eq!(radical_policy(&SystemState::new(20, 0, 200, 0, 0), &p), Action::new(8, 80));
    }

    #[test]
    fn conservative_examples() {
        let p = params(8);
        let x = SystemState::new(10, 0, 0, 0, 0);
        assert_eq!(conservative_policy(&x, &p, 20.0, 100.0), Action::new(0, 0));
        let x = SystemState::new(10, 0, 35, 0, 0);
        assert_eq!(conservative_policy(&x, &p, 20.0, f64::INFINITY), radical_policy(&x, &p));
        assert_eq!(conservative_policy(&x, &p, 20.0, 1e12), radical_policy(&x, &p));
        let x = SystemState::new(6, 0, 90, 0, 0);
        assert_eq!(conservative_policy(&x, &p, 20.0, 1.0), Action::new(6, 60));
    }

    proptest! {
        #[test]
        fn conservative_cost_never_exceeds_bound(q in 0u64..40, e_b in 0u64..400, m in 1u64..12,
                                                 price in prop::sample::select(vec![5.0, 10.0, 20.0, 7.5]),
                                                 bound in 0.5f64..2000.0) {
            let p = params(m);
            let x = SystemState::new(q, 0, e_b, 0, 0);
            let act = conservative_policy(&x, &p, price, bound);
            prop_assert!(grid_cost(act.k, act.battery_draw, price, &p) <= bound);
            prop_assert!(act.k <= q.min(m));
            prop_assert_eq!(act.battery_draw, e_b.min(act.k * p.block_energy));
            if e_b >= m * p.block_energy {
                prop_assert_eq!(act.k, q.min(m));
            }
        }

        #[test]
        fn radical_is_feasible_and_greedy(q in 0u64..100, e_b in 0u64..1000, m in 1u64..60) {
            let p = params(m);
            let act = radical_policy(&SystemState::new(q, 0, e_b, 0, 0), &p);
            prop_assert!(act.k <= q.min(m));
            prop_assert!(act.battery_draw <= e_b);
            prop_assert_eq!(act.battery_draw, e_b.min(act.k * p.block_energy));
        }
    }
}
