//! Optimality conditions of discount optimal policies.
//!
//! The difference functions `Z1`, `Z2`, `Z3` (and the reduced `Z` along
//! the greedy-battery curve) are expectations of value differences over the
//! successors produced by the transition kernel, so queue and battery
//! clipping are applied exactly as in value iteration.

use std::fmt;

use crate::error::{Error, Result};
use crate::mdp::{is_feasible, meets_energy_filter, MdpModel, PolicyTable, SystemState, TransformedAction, ValueTable};
use crate::scalar::Scalar;

/// Absolute tolerance of every inequality; equality within it counts as
/// satisfied.
pub const CONDITION_TOL: f64 = 1e-9;

/// `alpha * E[V(successor of (u, eta))]` from state `x`.
pub fn discounted_next<T: Scalar>(model: &MdpModel<T>, v: &ValueTable<T>, x: &SystemState, u: u64, eta: u64) -> T {
    let t = TransformedAction { u, eta };
    let e: T = model.next_state_distribution(x, &t).iter().map(|(s, pr)| *pr * v.get(s)).sum();
    model.params.alpha * e
}

/// First difference of `V` in `q`.
pub fn g1<T: Scalar>(v: &ValueTable<T>, x: &SystemState) -> Result<T> {
    if x.q == 0 {
        return Err(Error::Domain("G1 needs q >= 1".into()));
    }
    Ok(v.get(x) - v.get(&SystemState { q: x.q - 1, ..*x }))
}

/// Expected discounted difference between serving one EV fewer and the
/// current `u`.
pub fn z1<T: Scalar>(model: &MdpModel<T>, v: &ValueTable<T>, x: &SystemState, u: u64, eta: u64) -> Result<T> {
    if u == 0 {
        return Err(Error::Domain("Z1 needs u >= 1".into()));
    }
    Ok(discounted_next(model, v, x, u, eta) - discounted_next(model, v, x, u - 1, eta))
}

/// Expected discounted difference in the remaining battery `eta`.
pub fn z2<T: Scalar>(model: &MdpModel<T>, v: &ValueTable<T>, x: &SystemState, u: u64, eta: u64) -> Result<T> {
    if eta == 0 {
        return Err(Error::Domain("Z2 needs eta >= 1".into()));
    }
    Ok(discounted_next(model, v, x, u, eta) - discounted_next(model, v, x, u, eta - 1))
}

/// Expected discounted joint difference in `(u, eta)`.
pub fn z3<T: Scalar>(model: &MdpModel<T>, v: &ValueTable<T>, x: &SystemState, u: u64, eta: u64) -> Result<T> {
    if u == 0 || eta == 0 {
        return Err(Error::Domain("Z3 needs u >= 1 and eta >= 1".into()));
    }
    Ok(discounted_next(model, v, x, u, eta) - discounted_next(model, v, x, u - 1, eta - 1))
}

/// Battery left when `q - u` EVs are charged greedily from the battery.
pub fn eta_of_u<T>(x: &SystemState, u: u64, params: &crate::mdp::ModelParams<T>) -> u64 {
    x.e_b.saturating_sub((x.q - u) * params.block_energy)
}

/// Difference function of the reduced (`k`-only) policy at `u`.
pub fn z_reduced<T: Scalar>(model: &MdpModel<T>, v: &ValueTable<T>, x: &SystemState, u: u64) -> Result<T> {
    if u == 0 {
        return Err(Error::Domain("Z needs u >= 1".into()));
    }
    let prm = &model.params;
    let (hi, lo) = (eta_of_u(x, u, prm), eta_of_u(x, u - 1, prm));
    let battery = prm.beta * (T::of_u64(hi) - T::of_u64(lo)) / prm.tau * model.price(x);
    Ok(discounted_next(model, v, x, u, hi) - discounted_next(model, v, x, u - 1, lo) + battery)
}

/// Thresholds `beta E p / tau`, `-beta p / tau`, `beta p (E - 1) / tau`.
pub fn thresholds<T: Scalar>(model: &MdpModel<T>, x: &SystemState) -> [T; 3] {
    let prm = &model.params;
    let unit = prm.beta * model.price(x) / prm.tau;
    let e = T::of_u64(prm.block_energy);
    [unit * e, -unit, unit * (e - T::one())]
}

/// `true` when `t` is provably not discount optimal: fewer than the maximum
/// number of EVs are served while this period's renewable energy overflows
/// the battery anyway.
pub fn check_overflow<T: Scalar>(model: &MdpModel<T>, x: &SystemState, t: &TransformedAction) -> bool {
    let u_min = x.q - x.q.min(model.params.charge_points);
    let e_max = model.dims().e_max;
    t.u > u_min && t.eta + model.chains.renewables.value(x.e_a) > e_max
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckStatus {
    Satisfied,
    Violated,
    /// Both sides of the inequality leave the feasible action set.
    Undefined,
}

impl fmt::Display for CheckStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CheckStatus::Satisfied => "satisfied",
            CheckStatus::Violated => "violated",
            CheckStatus::Undefined => "undefined",
        })
    }
}

/// `left <= threshold <= right`; a `None` side is undefined at the boundary
/// and skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct Check<T> {
    pub name: &'static str,
    pub left: Option<T>,
    pub threshold: T,
    pub right: Option<T>,
}

impl<T: Scalar> Check<T> {
    pub fn left_holds(&self) -> Option<bool> {
        self.left.map(|l| l <= self.threshold + T::of(CONDITION_TOL))
    }

    pub fn right_holds(&self) -> Option<bool> {
        self.right.map(|r| self.threshold <= r + T::of(CONDITION_TOL))
    }

    pub fn status(&self) -> CheckStatus {
        match (self.left_holds(), self.right_holds()) {
            (None, None) => CheckStatus::Undefined,
            (l, r) if l != Some(false) && r != Some(false) => CheckStatus::Satisfied,
            _ => CheckStatus::Violated,
        }
    }
}

/// Every condition evaluated for one state and action.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport<T> {
    pub state: SystemState,
    pub action: TransformedAction,
    pub checks: Vec<Check<T>>,
}

impl<T: Scalar> ConditionReport<T> {
    pub fn violations(&self) -> impl Iterator<Item = &Check<T>> {
        self.checks.iter().filter(|c| c.status() == CheckStatus::Violated)
    }

    pub fn all_defined_satisfied(&self) -> bool {
        self.violations().next().is_none()
    }
}

/// Neighbour `(u + du, eta + de)` when it is feasible and the grid cost is
/// linear there.
fn neighbour<T>(model: &MdpModel<T>, x: &SystemState, t: &TransformedAction, du: i64, de: i64) -> Option<TransformedAction> {
    let u = t.u.checked_add_signed(du)?;
    let eta = t.eta.checked_add_signed(de)?;
    let n = TransformedAction { u, eta };
    (is_feasible(x, &n, &model.params) && meets_energy_filter(x, &n, &model.params)).then_some(n)
}

/// Evaluates the three sandwich inequalities of discount optimal actions
/// (in `u`, in `eta` and jointly) at `t`.
pub fn check_sandwich<T: Scalar>(model: &MdpModel<T>, v: &ValueTable<T>, x: &SystemState, t: &TransformedAction) -> ConditionReport<T> {
    let [thr_u, thr_eta, thr_joint] = thresholds(model, x);
    let linear = meets_energy_filter(x, t, &model.params);
    let side = |du: i64, de: i64, f: &dyn Fn(&TransformedAction) -> Result<T>, at: TransformedAction| -> Option<T> {
        if !linear {
            return None;
        }
        neighbour(model, x, t, du, de)?;
        f(&at).ok()
    };
    let up = |a: &TransformedAction, du: u64, de: u64| TransformedAction { u: a.u + du, eta: a.eta + de };
    let f1 = |a: &TransformedAction| z1(model, v, x, a.u, a.eta);
    let f2 = |a: &TransformedAction| z2(model, v, x, a.u, a.eta);
    let f3 = |a: &TransformedAction| z3(model, v, x, a.u, a.eta);
    let checks = vec![
        Check {
            name: "u",
            left: side(-1, 0, &f1, *t),
            threshold: thr_u,
            right: side(1, 0, &f1, up(t, 1, 0)),
        },
        Check {
            name: "eta",
            left: side(0, -1, &f2, *t),
            threshold: thr_eta,
            right: side(0, 1, &f2, up(t, 0, 1)),
        },
        Check {
            name: "u_eta",
            left: side(-1, -1, &f3, *t),
            threshold: thr_joint,
            right: side(1, 1, &f3, up(t, 1, 1)),
        },
    ];
    ConditionReport { state: *x, action: *t, checks }
}

/// `Z(u) <= beta E p / tau <= Z(u + 1)` for the reduced policy at `u`.
pub fn check_reduced<T: Scalar>(model: &MdpModel<T>, v: &ValueTable<T>, x: &SystemState, u: u64) -> Check<T> {
    let u_min = x.q - x.q.min(model.params.charge_points);
    let [thr, _, _] = thresholds(model, x);
    Check {
        name: "reduced_u",
        left: if u > u_min { z_reduced(model, v, x, u).ok() } else { None },
        threshold: thr,
        right: if u < x.q { z_reduced(model, v, x, u + 1).ok() } else { None },
    }
}

/// Which end of the `u` range is provably optimal for the reduced policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extreme {
    /// Charge `min(q, M)` EVs.
    ServeMax,
    /// Charge nobody.
    ServeNone,
    Interior,
}

/// Classifies `x` by the reduced difference function.
///
/// Serve-max uses `Z(q - min(q, M) + 1)`, the first step away from the
/// serve-max action; it is defined for every `q >= 1`. With `q = 0` both
/// ends coincide and `ServeMax` is returned.
pub fn classify_extremes<T: Scalar>(model: &MdpModel<T>, v: &ValueTable<T>, x: &SystemState) -> Result<Extreme> {
    if x.q == 0 {
        return Ok(Extreme::ServeMax);
    }
    let u_min = x.q - x.q.min(model.params.charge_points);
    let [thr, _, _] = thresholds(model, x);
    if z_reduced(model, v, x, u_min + 1)? > thr {
        Ok(Extreme::ServeMax)
    } else if z_reduced(model, v, x, x.q)? < thr {
        Ok(Extreme::ServeNone)
    } else {
        Ok(Extreme::Interior)
    }
}

/// States whose action keeps more battery than the greedy draw for the same `u`.
pub fn conjecture_counterexamples<T: Scalar>(model: &MdpModel<T>, policy: &PolicyTable) -> Vec<SystemState> {
    model
        .states()
        .filter(|x| {
            let t = policy.get(x);
            t.eta != eta_of_u(x, t.u, &model.params)
        })
        .collect()
}

/// Per-state audit of a policy against a value table.
#[derive(Debug, Clone)]
pub struct Audit<T> {
    pub reports: Vec<ConditionReport<T>>,
    pub overflow_violations: Vec<SystemState>,
}

impl<T: Scalar> Audit<T> {
    pub fn violated_states(&self) -> Vec<SystemState> {
        self.reports.iter().filter(|r| !r.all_defined_satisfied()).map(|r| r.state).collect()
    }

    pub fn defined_checks(&self) -> usize {
        self.reports
            .iter()
            .flat_map(|r| &r.checks)
            .filter(|c| c.status() != CheckStatus::Undefined)
            .count()
    }
}

/// Runs the overflow predicate and the sandwich inequalities (plus the
/// reduced-policy check where the action is the greedy battery draw) at every
/// state.
pub fn audit<T: Scalar>(model: &MdpModel<T>, v: &ValueTable<T>, policy: &PolicyTable) -> Result<Audit<T>> {
    if v.dims() != model.dims() || policy.dims() != model.dims() {
        return Err(Error::Dimension("tables do not match the model".into()));
    }
    let mut reports = Vec::with_capacity(model.n_states());
    let mut overflow_violations = Vec::new();
    for x in model.states() {
        let t = policy.get(&x);
        if !is_feasible(&x, &t, &model.params) {
            return Err(Error::InfeasibleAction { state: x.to_string(), reason: format!("policy action {t:?}") });
        }
        if check_overflow(model, &x, &t) {
            overflow_violations.push(x);
        }
        let mut report = check_sandwich(model, v, &x, &t);
        if t.eta == eta_of_u(&x, t.u, &model.params) {
            report.checks.push(check_reduced(model, v, &x, t.u));
        }
        reports.push(report);
    }
    Ok(Audit { reports, overflow_violations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{ExogenousChains, MarkovChain};
    use crate::mdp::{Dims, ModelParams};

    fn params() -> ModelParams<f64> {
        ModelParams {
            charge_points: 2,
            block_energy: 10,
            tau: 1.0,
            e_max: Some(20),
            q_max: 6,
            beta: 1.0,
            alpha: 0.5,
            cost_bound: f64::INFINITY,
            max_blocks: 1,
            energy_filter: true,
        }
    }

    fn model(renew: u64) -> MdpModel<f64> {
        let ch = ExogenousChains::new(MarkovChain::constant(0), MarkovChain::constant(renew), MarkovChain::constant(5));
        MdpModel::new(params(), ch).unwrap()
    }

    fn linear_in_q(d: Dims) -> ValueTable<f64> {
        ValueTable::from_vec(d, (0..d.n_states()).map(|i| d.state(i).q as f64).collect()).unwrap()
    }

    #[test]
    fn g1_cases() {
        let m = model(0);
        let d = m.dims();
        let flat = ValueTable::from_vec(d, vec![3.0; d.n_states()]).unwrap();
        assert_eq!(g1(&flat, &SystemState::new(2, 0, 0, 0, 0)).unwrap(), 0.0);
        let lin = linear_in_q(d);
        assert_eq!(g1(&lin, &SystemState::new(4, 0, 3, 0, 0)).unwrap(), 1.0);
        assert!(matches!(g1(&lin, &SystemState::new(0, 0, 0, 0, 0)), Err(Error::Domain(_))));
    }

    #[test]
    fn z_functions_on_closed_forms() {
        let m = model(0);
        let d = m.dims();
        let x = SystemState::new(3, 0, 5, 0, 0);
        let lin = linear_in_q(d);
        assert_eq!(z1(&m, &lin, &x, 2, 1).unwrap(), 0.5);
        let flat = ValueTable::from_vec(d, vec![3.0; d.n_states()]).unwrap();
        assert_eq!(z2(&m, &flat, &x, 2, 1).unwrap(), 0.0);
        assert_eq!(z3(&m, &flat, &x, 2, 1).unwrap(), 0.0);
        assert!(z1(&m, &lin, &x, 0, 1).is_err());
        assert!(z2(&m, &lin, &x, 1, 0).is_err());
        assert!(z3(&m, &lin, &x, 0, 1).is_err());

        let zero_alpha = m.with_params(params().with_alpha(0.0)).unwrap();
        assert_eq!(z1(&zero_alpha, &lin, &x, 2, 1).unwrap(), 0.0);
    }

    #[test]
    fn overflow_predicate() {
        let m = model(1);
        // q=5, M=2: u_min = 3
        let x = SystemState::new(5, 0, 20, 0, 0);
        assert!(check_overflow(&m, &x, &TransformedAction::new(4, 20)));
        assert!(!check_overflow(&m, &x, &TransformedAction::new(3, 20)));
        // eta + e_a == e_max exactly is not an overflow
        assert!(!check_overflow(&m, &x, &TransformedAction::new(4, 19)));
    }

    #[test]
    fn greedy_battery_remainder() {
        let p = params();
        assert_eq!(eta_of_u(&SystemState::new(5, 0, 15, 0, 0), 3, &p), 0);
        assert_eq!(eta_of_u(&SystemState::new(5, 0, 15, 0, 0), 5, &p), 15);
        assert_eq!(eta_of_u(&SystemState::new(5, 0, 0, 0, 0), 2, &p), 0);
    }

    #[test]
    fn reduced_z_vanishes_without_value_or_battery() {
        let m = model(0);
        let zero = ValueTable::zeros(m.dims());
        assert_eq!(z_reduced(&m, &zero, &SystemState::new(4, 0, 0, 0, 0), 2).unwrap(), 0.0);
        assert!(z_reduced(&m, &zero, &SystemState::new(4, 0, 0, 0, 0), 0).is_err());
    }

    #[test]
    fn zero_queue_is_both_extremes() {
        let m = model(0);
        let zero = ValueTable::zeros(m.dims());
        assert_eq!(classify_extremes(&m, &zero, &SystemState::new(0, 0, 3, 0, 0)).unwrap(), Extreme::ServeMax);
    }

    #[test]
    fn check_status_rules() {
        let c = Check { name: "u", left: Some(1.0), threshold: 1.0 + 5e-10, right: None };
        assert_eq!(c.status(), CheckStatus::Satisfied);
        let c = Check { name: "u", left: None, threshold: 0.0, right: Some(-1.0) };
        assert_eq!(c.status(), CheckStatus::Violated);
        let c = Check::<f64> { name: "u", left: None, threshold: 0.0, right: None };
        assert_eq!(c.status(), CheckStatus::Undefined);
    }
}
