use crate::error::{Error, Result};
use crate::scalar::{positive_part, Scalar};

use super::model::{Action, MdpModel, ModelParams, SystemState, TransformedAction};

/// `(q - u) E >= e_b - eta`: the battery never supplies more than the
/// energy being charged.
pub fn meets_energy_filter<T>(x: &SystemState, t: &TransformedAction, params: &ModelParams<T>) -> bool {
    (x.q - t.u) * params.block_energy >= x.e_b - t.eta
}

/// Range and (when enabled) energy-filter feasibility of `t` in `x`.
pub fn is_feasible<T>(x: &SystemState, t: &TransformedAction, params: &ModelParams<T>) -> bool {
    let u_min = x.q - x.q.min(params.charge_points);
    t.u >= u_min && t.u <= x.q && t.eta <= x.e_b && (!params.energy_filter || meets_energy_filter(x, t, params))
}

/// Feasible transformed actions of `x`, ordered by `u` then `eta`.
pub fn feasible_actions<T>(x: &SystemState, params: &ModelParams<T>) -> Vec<TransformedAction> {
    let u_min = x.q - x.q.min(params.charge_points);
    let mut out = Vec::new();
    for u in u_min..=x.q {
        for eta in 0..=x.e_b {
            let t = TransformedAction { u, eta };
            if !params.energy_filter || meets_energy_filter(x, &t, params) {
                out.push(t);
            }
        }
    }
    out
}

/// `(k E / tau - w)^+ p` with `w tau = battery_draw`.
pub fn grid_cost<T: Scalar>(k: u64, battery_draw: u64, price: T, params: &ModelParams<T>) -> T {
    let deficit = (k * params.block_energy) as f64 - battery_draw as f64;
    positive_part(T::of(deficit) / params.tau) * price
}

impl<T: Scalar> MdpModel<T> {
    fn check_action(&self, x: &SystemState, act: &Action) -> Result<()> {
        if act.k > x.q.min(self.params.charge_points) {
            return Err(Error::InfeasibleAction {
                state: x.to_string(),
                reason: format!("k = {} exceeds min(q, M)", act.k),
            });
        }
        if act.battery_draw > x.e_b {
            return Err(Error::InfeasibleAction {
                state: x.to_string(),
                reason: format!("battery draw {} exceeds stored energy", act.battery_draw),
            });
        }
        Ok(())
    }

    /// Grid energy bought times price.
    pub fn stage_cost(&self, x: &SystemState, act: &Action) -> Result<T> {
        self.check_action(x, act)?;
        Ok(grid_cost(act.k, act.battery_draw, self.price(x), &self.params))
    }

    /// `beta * stage_cost + q`.
    pub fn lagrangian_cost(&self, x: &SystemState, act: &Action) -> Result<T> {
        Ok(self.params.beta * self.stage_cost(x, act)? + T::of_u64(x.q))
    }

    /// Queue length after `u` remain and this period's arrivals join.
    #[inline]
    pub fn next_queue(&self, u: u64, x: &SystemState) -> u64 {
        (u + self.chains.arrivals.value(x.a)).min(self.params.q_max)
    }

    /// Battery level after `eta` remains and this period's renewable energy
    /// is stored, clipped at capacity.
    #[inline]
    pub fn next_battery(&self, eta: u64, x: &SystemState) -> u64 {
        (eta + self.chains.renewables.value(x.e_a)).min(self.dims().e_max)
    }

    /// Successor states of `x` under `t` with their probabilities.
    ///
    /// This period's arrivals `a` and renewable energy `e_a` join the queue
    /// and the battery at the end of the period; the next exogenous indices
    /// are drawn from the current rows.
    pub fn next_state_distribution(&self, x: &SystemState, t: &TransformedAction) -> Vec<(SystemState, T)> {
        let q = self.next_queue(t.u, x);
        let e_b = self.next_battery(t.eta, x);
        let ch = &self.chains;
        let mut out = Vec::new();
        for (a, &pa) in ch.arrivals.row(x.a).iter().enumerate() {
            if pa == T::zero() {
                continue;
            }
            for (e_a, &pe) in ch.renewables.row(x.e_a).iter().enumerate() {
                if pe == T::zero() {
                    continue;
                }
                for (p, &pp) in ch.prices.row(x.p).iter().enumerate() {
                    if pp == T::zero() {
                        continue;
                    }
                    out.push((SystemState { q, a, e_b, e_a, p }, pa * pe * pp));
                }
            }
        }
        out
    }
}
