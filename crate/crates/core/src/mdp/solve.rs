use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::{positive_part, Scalar};

use super::model::{Action, Dims, MdpModel, SystemState, TransformedAction};

/// Default span tolerance of value iteration.
pub const DEFAULT_TOLERANCE: f64 = 1e-8;

/// Dense table of values over the truncated state space.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable<T> {
    dims: Dims,
    data: Vec<T>,
}

impl<T: Scalar> ValueTable<T> {
    pub fn zeros(dims: Dims) -> Self {
        Self { dims, data: vec![T::zero(); dims.n_states()] }
    }

    pub fn from_vec(dims: Dims, data: Vec<T>) -> Result<Self> {
        if data.len() != dims.n_states() {
            return Err(Error::Dimension(format!("{} values for {} states", data.len(), dims.n_states())));
        }
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    #[inline]
    pub fn get(&self, x: &SystemState) -> T {
        self.data[self.dims.index(x)]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Largest absolute entry-wise difference.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.data.iter().zip(&other.data).map(|(&a, &b)| (a - b).abs()).fold(T::zero(), T::max)
    }
}

/// Span seminorm of `a - b`: max minus min of the entry-wise difference.
pub fn span<T: Scalar>(a: &ValueTable<T>, b: &ValueTable<T>) -> T {
    let (lo, hi) = diff_range(a, b);
    hi - lo
}

fn diff_range<T: Scalar>(a: &ValueTable<T>, b: &ValueTable<T>) -> (T, T) {
    a.data.iter().zip(&b.data).fold((T::infinity(), T::neg_infinity()), |(lo, hi), (&x, &y)| {
        let d = x - y;
        (lo.min(d), hi.max(d))
    })
}

/// Stationary deterministic policy in transformed coordinates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyTable {
    dims: Dims,
    actions: Vec<TransformedAction>,
}

impl PolicyTable {
    pub fn from_vec(dims: Dims, actions: Vec<TransformedAction>) -> Result<Self> {
        if actions.len() != dims.n_states() {
            return Err(Error::Dimension(format!("{} actions for {} states", actions.len(), dims.n_states())));
        }
        Ok(Self { dims, actions })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    #[inline]
    pub fn get(&self, x: &SystemState) -> TransformedAction {
        self.actions[self.dims.index(x)]
    }

    pub fn action(&self, x: &SystemState) -> Action {
        self.get(x).to_action(x)
    }

    pub fn set(&mut self, x: &SystemState, t: TransformedAction) {
        let i = self.dims.index(x);
        self.actions[i] = t;
    }

    pub fn as_slice(&self) -> &[TransformedAction] {
        &self.actions
    }

    /// Policy built state by state.
    pub fn from_fn(dims: Dims, f: impl Fn(&SystemState) -> TransformedAction) -> Self {
        Self { dims, actions: dims.states().map(|x| f(&x)).collect() }
    }
}

/// One sparse row of the joint exogenous transition.
type JointRow<T> = Vec<(usize, T)>;

fn joint_rows<T: Scalar>(model: &MdpModel<T>) -> Vec<JointRow<T>> {
    let d = model.dims();
    let ch = &model.chains;
    (0..d.n_exo())
        .map(|exo| {
            let (a, e, p) = d.exo_parts(exo);
            let mut row = Vec::new();
            for (a2, &pa) in ch.arrivals.row(a).iter().enumerate() {
                for (e2, &pe) in ch.renewables.row(e).iter().enumerate() {
                    for (p2, &pp) in ch.prices.row(p).iter().enumerate() {
                        let pr = pa * pe * pp;
                        if pr > T::zero() {
                            row.push((d.exo_index(a2, e2, p2), pr));
                        }
                    }
                }
            }
            row
        })
        .collect()
}

/// Expected next-period value on the `(q', e_b')` grid for one current
/// exogenous triple.
fn expected_next<T: Scalar>(prev: &ValueTable<T>, row: &JointRow<T>) -> Vec<T> {
    let d = prev.dims;
    let n_exo = d.n_exo();
    let n_slots = (d.q_max as usize + 1) * (d.e_max as usize + 1);
    (0..n_slots)
        .map(|slot| {
            let base = slot * n_exo;
            row.iter().map(|&(exo, pr)| pr * prev.data[base + exo]).sum()
        })
        .collect()
}

/// Keeps the first minimiser unless a later candidate is smaller by more
/// than rounding noise, so ties resolve to the smallest `u`, then the
/// smallest `eta`.
#[inline]
fn improves<T: Scalar>(candidate: T, best: T) -> bool {
    if !best.is_finite() {
        return candidate < best;
    }
    let slack = T::of(64.0) * T::epsilon() * best.abs().max(T::one());
    candidate < best - slack
}

/// Minimises the Lagrangian stage cost plus discounted expected `prev` over
/// the feasible actions of every state with exogenous triple `exo`.
fn minimise_exo<T: Scalar>(model: &MdpModel<T>, prev: &ValueTable<T>, row: &JointRow<T>, exo: usize) -> Vec<(T, TransformedAction)> {
    let d = model.dims();
    let prm = &model.params;
    let (a, e, p) = d.exo_parts(exo);
    let w = expected_next(prev, row);
    let width = d.e_max as usize + 1;
    let arrivals = model.chains.arrivals.value(a);
    let renew = model.chains.renewables.value(e);
    let unit = prm.beta * T::of_u64(model.chains.prices.value(p)) / prm.tau;
    let block = prm.block_energy;
    let mut out = Vec::with_capacity((d.q_max as usize + 1) * width);
    for q in 0..=d.q_max {
        let u_min = q - q.min(prm.charge_points);
        for e_b in 0..=d.e_max {
            let mut best = T::infinity();
            let mut arg = TransformedAction::default();
            for u in u_min..=q {
                let served = (q - u) * block;
                let eta_lo = if prm.energy_filter { e_b.saturating_sub(served) } else { 0 };
                let q_next = (u + arrivals).min(d.q_max) as usize;
                for eta in eta_lo..=e_b {
                    let deficit = served as f64 - (e_b - eta) as f64;
                    let e_next = (eta + renew).min(d.e_max) as usize;
                    let v = unit * positive_part(T::of(deficit)) + T::of_u64(q) + prm.alpha * w[q_next * width + e_next];
                    if improves(v, best) {
                        best = v;
                        arg = TransformedAction { u, eta };
                    }
                }
            }
            out.push((best, arg));
        }
    }
    out
}

/// One Bellman update of `prev`, with the greedy policy that attains it.
pub fn value_iteration_step<T: Scalar>(model: &MdpModel<T>, prev: &ValueTable<T>) -> (ValueTable<T>, PolicyTable) {
    let rows = joint_rows(model);
    step_with_rows(model, prev, &rows)
}

fn step_with_rows<T: Scalar>(model: &MdpModel<T>, prev: &ValueTable<T>, rows: &[JointRow<T>]) -> (ValueTable<T>, PolicyTable) {
    let d = model.dims();
    let n_exo = d.n_exo();
    let per_exo: Vec<Vec<(T, TransformedAction)>> =
        (0..n_exo).into_par_iter().map(|exo| minimise_exo(model, prev, &rows[exo], exo)).collect();
    let mut data = vec![T::zero(); d.n_states()];
    let mut actions = vec![TransformedAction::default(); d.n_states()];
    for (exo, slots) in per_exo.into_iter().enumerate() {
        for (slot, (v, t)) in slots.into_iter().enumerate() {
            data[slot * n_exo + exo] = v;
            actions[slot * n_exo + exo] = t;
        }
    }
    (ValueTable { dims: d, data }, PolicyTable { dims: d, actions })
}

/// Output of [`ValueIteration::run`].
#[derive(Debug, Clone)]
pub struct Solution<T> {
    /// Last iterate shifted by the midpoint of the span bounds, an estimate of
    /// the discounted value function.
    pub values: ValueTable<T>,
    /// Greedy policy with respect to `values`.
    pub policy: PolicyTable,
    pub iterations: usize,
    pub last_span: T,
}

/// Successive approximation from `V_0 = 0`, stopped on the span seminorm of
/// consecutive iterates.
#[derive(Debug, Clone, Copy)]
pub struct ValueIteration {
    pub tolerance: f64,
    pub max_iters: usize,
}

impl Default for ValueIteration {
    fn default() -> Self {
        Self { tolerance: DEFAULT_TOLERANCE, max_iters: 1_000_000 }
    }
}

impl ValueIteration {
    pub fn new(tolerance: f64, max_iters: usize) -> Self {
        Self { tolerance, max_iters }
    }

    pub fn run<T: Scalar>(&self, model: &MdpModel<T>) -> Result<Solution<T>> {
        self.run_with(model, |_, _| {})
    }

    /// Runs value iteration, passing every iterate `V_n` (starting with
    /// `V_0`) to `observe`.
    pub fn run_with<T: Scalar, F>(&self, model: &MdpModel<T>, mut observe: F) -> Result<Solution<T>>
    where
        F: FnMut(usize, &ValueTable<T>),
    {
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidArgument("tolerance must be positive".into()));
        }
        let rows = joint_rows(model);
        let tol = T::of(self.tolerance);
        let mut v = ValueTable::zeros(model.dims());
        observe(0, &v);
        let mut last_span = T::infinity();
        for n in 1..=self.max_iters {
            let (next, _) = step_with_rows(model, &v, &rows);
            observe(n, &next);
            let (lo, hi) = diff_range(&next, &v);
            last_span = hi - lo;
            if last_span < tol {
                let alpha = model.params.alpha;
                let shift = alpha / (T::one() - alpha) * (lo + hi) / T::of(2.0);
                let values = ValueTable { dims: next.dims, data: next.data.iter().map(|&x| x + shift).collect() };
                let (_, policy) = step_with_rows(model, &values, &rows);
                return Ok(Solution { values, policy, iterations: n, last_span });
            }
            v = next;
        }
        Err(Error::NotConverged { iterations: self.max_iters, last_span: last_span.as_f64() })
    }
}

/// Solves the discounted problem of `model` by value iteration.
pub fn solve_discounted<T: Scalar>(model: &MdpModel<T>, tol: f64, max_iters: usize) -> Result<Solution<T>> {
    ValueIteration::new(tol, max_iters).run(model)
}
