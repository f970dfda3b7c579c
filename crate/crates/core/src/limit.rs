//! Limits of discount optimal quantities as the discount factor tends to 1.
//!
//! The discounted problem is re-solved along an increasing schedule of
//! discount factors; difference functions and relative values are
//! extrapolated linearly in `1 - alpha` (Richardson) from the last two
//! points, and the index from which the greedy policy no longer changes is
//! reported.

use crate::conditions::{z1, z2, z3, z_reduced};
use crate::error::{Error, Result};
use crate::mdp::{solve_discounted, MdpModel, PolicyTable, SystemState, TransformedAction, ValueTable};
use crate::scalar::Scalar;

pub const DEFAULT_SCHEDULE: [f64; 4] = [0.9, 0.99, 0.999, 0.9999];

/// Limit estimates at one state, taken at the greedy action of the last
/// schedule point. `None` where a difference leaves the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitEntry<T> {
    pub state: SystemState,
    pub action: TransformedAction,
    pub z1: Option<T>,
    pub z2: Option<T>,
    pub z3: Option<T>,
    pub z: Option<T>,
    /// `V(x) - V(x_0)` with `x_0` the first state of the table.
    pub relative_value: T,
}

#[derive(Debug, Clone)]
pub struct VanishingLimit<T> {
    pub schedule: Vec<f64>,
    pub policies: Vec<PolicyTable>,
    /// First schedule index from which every greedy policy is the same.
    pub stabilized_at: usize,
    /// Set when the last two greedy policies differ.
    pub warning: Option<String>,
    /// Limit of `(1 - alpha) V(x_0)`, the optimal average Lagrangian cost.
    pub average_cost: T,
    pub entries: Vec<LimitEntry<T>>,
    /// Largest change of any estimate between the extrapolation from the
    /// last two points and the one from the two before (the plain change
    /// when the schedule is shorter than three).
    pub estimate_change: T,
}

impl<T: Scalar> VanishingLimit<T> {
    pub fn stable(&self) -> bool {
        self.warning.is_none()
    }
}

// z1, z2, z3, z and relative value per state.
type Raw<T> = Vec<[Option<T>; 5]>;

fn raw<T: Scalar>(model: &MdpModel<T>, v: &ValueTable<T>, actions: &[TransformedAction]) -> (Raw<T>, T) {
    let base = v.as_slice()[0];
    let rows = model
        .states()
        .zip(actions)
        .map(|(x, t)| {
            [
                z1(model, v, &x, t.u, t.eta).ok(),
                z2(model, v, &x, t.u, t.eta).ok(),
                z3(model, v, &x, t.u, t.eta).ok(),
                z_reduced(model, v, &x, t.u).ok(),
                Some(v.get(&x) - base),
            ]
        })
        .collect();
    (rows, (T::one() - model.params.alpha) * base)
}

fn max_change<T: Scalar>(a: &(Raw<T>, T), b: &(Raw<T>, T)) -> T {
    let mut worst = (a.1 - b.1).abs();
    for (x, y) in a.0.iter().zip(&b.0) {
        for k in 0..5 {
            if let (Some(x), Some(y)) = (x[k], y[k]) {
                worst = worst.max((x - y).abs());
            }
        }
    }
    worst
}

fn extrapolate<T: Scalar>(h0: f64, z0: T, h1: f64, z1: T) -> T {
    (T::of(h0) * z1 - T::of(h1) * z0) / T::of(h0 - h1)
}

/// Re-solves `model` at every discount factor of `schedule` and extrapolates
/// to `alpha = 1`.
pub fn vanishing_discount_limit<T: Scalar>(
    model: &MdpModel<T>,
    schedule: &[f64],
    tol: f64,
    max_iters: usize,
) -> Result<VanishingLimit<T>> {
    if schedule.is_empty() || schedule.iter().any(|&a| !(a > 0.0 && a < 1.0)) || schedule.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("schedule must be increasing in (0, 1)".into()));
    }
    let mut policies = Vec::with_capacity(schedule.len());
    let mut models = Vec::with_capacity(schedule.len());
    let mut values = Vec::with_capacity(schedule.len());
    for &alpha in schedule {
        let m = model.with_params(model.params.with_alpha(T::of(alpha)))?;
        let sol = solve_discounted(&m, tol, max_iters)?;
        policies.push(sol.policy);
        values.push(sol.values);
        models.push(m);
    }
    let last = schedule.len() - 1;
    let mut stabilized_at = last;
    while stabilized_at > 0 && policies[stabilized_at - 1] == policies[last] {
        stabilized_at -= 1;
    }
    let warning = (last > 0 && policies[last - 1] != policies[last])
        .then(|| format!("greedy policy changes between alpha = {} and {}", schedule[last - 1], schedule[last]));

    // every point is evaluated at the same (final) actions so the estimates are comparable
    let actions = policies[last].as_slice().to_vec();
    let raws: Vec<(Raw<T>, T)> = models.iter().zip(&values).map(|(m, v)| raw(m, v, &actions)).collect();
    let h: Vec<f64> = schedule.iter().map(|a| 1.0 - a).collect();

    let estimate_at = |i: usize| -> (Raw<T>, T) {
        if i == 0 {
            return raws[0].clone();
        }
        let (r0, g0) = &raws[i - 1];
        let (r1, g1) = &raws[i];
        let rows = r0
            .iter()
            .zip(r1)
            .map(|(a, b)| {
                let mut out = [None; 5];
                for k in 0..5 {
                    out[k] = match (a[k], b[k]) {
                        (Some(x), Some(y)) => Some(extrapolate(h[i - 1], x, h[i], y)),
                        _ => None,
                    };
                }
                out
            })
            .collect();
        (rows, extrapolate(h[i - 1], *g0, h[i], *g1))
    };

    let (best, average_cost) = estimate_at(last);
    let estimate_change = match last {
        0 => T::zero(),
        1 => max_change(&raws[1], &raws[0]),
        _ => max_change(&(best.clone(), average_cost), &estimate_at(last - 1)),
    };

    let entries = model
        .states()
        .zip(&actions)
        .zip(&best)
        .map(|((state, &action), r)| LimitEntry {
            state,
            action,
            z1: r[0],
            z2: r[1],
            z3: r[2],
            z: r[3],
            relative_value: r[4].unwrap_or_else(T::zero),
        })
        .collect();
    Ok(VanishingLimit {
        schedule: schedule.to_vec(),
        policies,
        stabilized_at,
        warning,
        average_cost,
        entries,
        estimate_change,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{ExogenousChains, MarkovChain};
    use crate::mdp::ModelParams;

    fn params(q_max: u64, e_max: u64, beta: f64) -> ModelParams<f64> {
        ModelParams {
            charge_points: 2,
            block_energy: 1,
            tau: 1.0,
            e_max: Some(e_max),
            q_max,
            beta,
            alpha: 0.9,
            cost_bound: f64::INFINITY,
            max_blocks: 1,
            energy_filter: true,
        }
    }

    #[test]
    fn degenerate_model_has_zero_limits() {
        let c = || MarkovChain::constant(0);
        let m = MdpModel::new(params(0, 0, 0.0), ExogenousChains::new(c(), c(), MarkovChain::constant(1))).unwrap();
        let lim = vanishing_discount_limit(&m, &DEFAULT_SCHEDULE, 1e-10, 1000).unwrap();
        assert_eq!(lim.stabilized_at, 0);
        assert!(lim.stable());
        assert_eq!(lim.average_cost, 0.0);
        for e in &lim.entries {
            assert_eq!(e.relative_value, 0.0);
            for z in [e.z1, e.z2, e.z3, e.z].into_iter().flatten() {
                assert_eq!(z, 0.0);
            }
        }
    }

    #[test]
    fn serve_max_instance_stabilizes_at_first_alpha() {
        let two = |a, b| MarkovChain::new(vec![a, b], vec![vec![0.5, 0.5], vec![0.5, 0.5]], 0).unwrap();
        let m = MdpModel::new(params(4, 2, 0.0), ExogenousChains::new(two(0, 2), two(0, 1), two(1, 2))).unwrap();
        let lim = vanishing_discount_limit(&m, &DEFAULT_SCHEDULE, 1e-10, 100_000).unwrap();
        assert_eq!(lim.stabilized_at, 0);
        assert!(lim.entries.iter().all(|e| e.action.u == e.state.q - e.state.q.min(2)));
    }

    #[test]
    fn rejects_bad_schedules() {
        let c = || MarkovChain::constant(0);
        let m = MdpModel::new(params(0, 0, 0.0), ExogenousChains::new(c(), c(), MarkovChain::constant(1))).unwrap();
        assert!(vanishing_discount_limit(&m, &[0.99, 0.9], 1e-8, 10).is_err());
        assert!(vanishing_discount_limit(&m, &[], 1e-8, 10).is_err());
        assert!(vanishing_discount_limit(&m, &[1.0], 1e-8, 10).is_err());
    }
}
