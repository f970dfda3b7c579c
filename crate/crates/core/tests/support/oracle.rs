//! Brute-force reference for small discounted instances.
//!
//! Feasible sets, stage costs and successors are rebuilt here from the model
//! parameters and chain tables; policies are evaluated exactly by solving
//! `(I - alpha P) v = c` with a dense LU factorisation.

#![allow(dead_code)]

use std::collections::HashMap;

use evsched::{MdpModel64, PolicyTable, SystemState};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

pub struct Oracle {
    pub states: Vec<SystemState>,
    index: HashMap<SystemState, usize>,
    /// Feasible `(u, eta)` per state.
    pub actions: Vec<Vec<(u64, u64)>>,
    cost: Vec<Vec<f64>>,
    succ: Vec<Vec<Vec<(usize, f64)>>>,
    alpha: f64,
}

impl Oracle {
    pub fn new(model: &MdpModel64) -> Self {
        let p = &model.params;
        let ch = &model.chains;
        let e_max = p.e_max.expect("finite battery");
        let (na, ne, np) = (ch.arrivals.len(), ch.renewables.len(), ch.prices.len());
        let mut states = Vec::new();
        for q in 0..=p.q_max {
            for a in 0..na {
                for e_b in 0..=e_max {
                    for e_a in 0..ne {
                        for pi in 0..np {
                            states.push(SystemState { q, a, e_b, e_a, p: pi });
                        }
                    }
                }
            }
        }
        let index: HashMap<_, _> = states.iter().enumerate().map(|(i, s)| (*s, i)).collect();
        let mut actions = Vec::new();
        let mut cost = Vec::new();
        let mut succ = Vec::new();
        for s in &states {
            let price = ch.prices.value(s.p) as f64;
            let mut acts = Vec::new();
            let mut costs = Vec::new();
            let mut nexts = Vec::new();
            for k in 0..=s.q.min(p.charge_points) {
                for eta in 0..=s.e_b {
                    let draw = s.e_b - eta;
                    if p.energy_filter && k * p.block_energy < draw {
                        continue;
                    }
                    let u = s.q - k;
                    let grid = ((k * p.block_energy) as f64 - draw as f64) / p.tau;
                    acts.push((u, eta));
                    costs.push(p.beta * grid.max(0.0) * price + s.q as f64);
                    let q2 = (u + ch.arrivals.value(s.a)).min(p.q_max);
                    let b2 = (eta + ch.renewables.value(s.e_a)).min(e_max);
                    let mut row = Vec::new();
                    for a2 in 0..na {
                        for e2 in 0..ne {
                            for p2 in 0..np {
                                let pr = ch.arrivals.row(s.a)[a2] * ch.renewables.row(s.e_a)[e2] * ch.prices.row(s.p)[p2];
                                if pr > 0.0 {
                                    let t = SystemState { q: q2, a: a2, e_b: b2, e_a: e2, p: p2 };
                                    row.push((index[&t], pr));
                                }
                            }
                        }
                    }
                    nexts.push(row);
                }
            }
            actions.push(acts);
            cost.push(costs);
            succ.push(nexts);
        }
        Self { states, index, actions, cost, succ, alpha: p.alpha }
    }

    pub fn n(&self) -> usize {
        self.states.len()
    }

    pub fn state_index(&self, s: &SystemState) -> usize {
        self.index[s]
    }

    /// Number of stationary deterministic policies.
    pub fn policy_count(&self) -> u128 {
        self.actions.iter().map(|a| a.len() as u128).product()
    }

    /// Exact discounted value of the policy choosing `choice[i]` in state `i`.
    pub fn evaluate(&self, choice: &[usize]) -> DVector<f64> {
        let n = self.n();
        let mut m = DMatrix::<f64>::identity(n, n);
        let mut c = DVector::<f64>::zeros(n);
        for i in 0..n {
            let j = choice[i];
            c[i] = self.cost[i][j];
            for &(t, pr) in &self.succ[i][j] {
                m[(i, t)] -= self.alpha * pr;
            }
        }
        m.lu().solve(&c).expect("I - alpha P is nonsingular")
    }

    pub fn q_value(&self, v: &DVector<f64>, i: usize, j: usize) -> f64 {
        self.cost[i][j] + self.alpha * self.succ[i][j].iter().map(|&(t, pr)| pr * v[t]).sum::<f64>()
    }

    /// Choice vector of a policy table.
    pub fn choice_of(&self, table: &PolicyTable) -> Vec<usize> {
        self.states
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let t = table.get(s);
                self.actions[i].iter().position(|&a| a == (t.u, t.eta)).expect("table action is feasible")
            })
            .collect()
    }

    pub fn value_of(&self, table: &PolicyTable) -> DVector<f64> {
        self.evaluate(&self.choice_of(table))
    }

    /// Howard policy iteration from the serve-nobody policy.
    pub fn policy_iteration(&self) -> (Vec<usize>, DVector<f64>) {
        let mut choice: Vec<usize> = self
            .states
            .iter()
            .enumerate()
            .map(|(i, s)| self.actions[i].iter().position(|&(u, eta)| u == s.q && eta == s.e_b).unwrap())
            .collect();
        loop {
            let v = self.evaluate(&choice);
            let mut changed = false;
            for i in 0..self.n() {
                let cur = self.q_value(&v, i, choice[i]);
                let (best, val) = (0..self.actions[i].len())
                    .map(|j| (j, self.q_value(&v, i, j)))
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                    .unwrap();
                if val < cur - 1e-12 {
                    choice[i] = best;
                    changed = true;
                }
            }
            if !changed {
                return (choice, v);
            }
        }
    }

    /// Smallest `Q(x, a) - v(x)` over all states and feasible actions. A
    /// value of at least `-eps` means no single-state deviation improves `v`.
    pub fn deviation_gap(&self, v: &DVector<f64>) -> f64 {
        let mut gap = f64::INFINITY;
        for i in 0..self.n() {
            for j in 0..self.actions[i].len() {
                gap = gap.min(self.q_value(v, i, j) - v[i]);
            }
        }
        gap
    }

    /// Componentwise minimum of the exact value over every stationary
    /// deterministic policy.
    pub fn enumerate_min(&self) -> DVector<f64> {
        let total = self.policy_count();
        assert!(total <= 20_000_000, "{total} policies is too many to enumerate");
        let radix: Vec<usize> = self.actions.iter().map(|a| a.len()).collect();
        let chunk = 4096u64;
        let n_chunks = (total as u64).div_ceil(chunk);
        (0..n_chunks)
            .into_par_iter()
            .map(|c| {
                let mut best = DVector::from_element(self.n(), f64::INFINITY);
                let start = c * chunk;
                let end = (start + chunk).min(total as u64);
                let mut choice = decode(start, &radix);
                for _ in start..end {
                    let v = self.evaluate(&choice);
                    best.zip_apply(&v, |b, x| *b = b.min(x));
                    increment(&mut choice, &radix);
                }
                best
            })
            .reduce(|| DVector::from_element(self.n(), f64::INFINITY), |a, b| a.zip_map(&b, f64::min))
    }
}

fn decode(mut code: u64, radix: &[usize]) -> Vec<usize> {
    radix
        .iter()
        .map(|&r| {
            let d = (code % r as u64) as usize;
            code /= r as u64;
            d
        })
        .collect()
}

fn increment(choice: &mut [usize], radix: &[usize]) {
    for (d, &r) in choice.iter_mut().zip(radix) {
        *d += 1;
        if *d < r {
            return;
        }
        *d = 0;
    }
}
