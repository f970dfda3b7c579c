//! Finite-state Markov processes for EV arrivals, renewable arrivals and
//! grid price, plus the uniform batch-size law of energy blocks per EV.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::solve_dense;
use crate::scalar::Scalar;

/// Finite-state Markov chain over state indices with integer values attached.
///
/// Transitions operate on indices; `values[i]` is the physical value of state
/// `i` (EVs, energy units or price units depending on the process).
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovChain<T> {
    values: Vec<u64>,
    transition: Vec<Vec<T>>,
    initial: usize,
    // cumulative rows in f64 for inverse-CDF sampling
    cumulative: Vec<Vec<f64>>,
}

impl<T: Scalar> MarkovChain<T> {
    /// Builds a chain and checks that it is row-stochastic, irreducible and
    /// aperiodic.
    pub fn new(values: Vec<u64>, transition: Vec<Vec<T>>, initial: usize) -> Result<Self> {
        let chain = Self::new_reducible(values, transition, initial)?;
        if !chain.is_irreducible() {
            return Err(Error::InvalidChain("chain is not irreducible".into()));
        }
        let period = chain.period();
        if period != 1 {
            return Err(Error::InvalidChain(format!("chain is periodic with period {period}")));
        }
        Ok(chain)
    }

    /// Builds a row-stochastic chain without the ergodicity checks. Used for
    /// degenerate test models (identity rows).
    pub fn new_reducible(values: Vec<u64>, transition: Vec<Vec<T>>, initial: usize) -> Result<Self> {
        let n = values.len();
        if n == 0 {
            return Err(Error::InvalidChain("chain needs at least one state".into()));
        }
        if transition.len() != n {
            return Err(Error::InvalidChain(format!(
                "transition has {} rows for {} states",
                transition.len(),
                n
            )));
        }
        if initial >= n {
            return Err(Error::InvalidChain(format!("initial index {initial} out of range 0..{n}")));
        }
        let tol = T::stochastic_tol();
        for (i, row) in transition.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidChain(format!("row {i} has {} entries, expected {n}", row.len())));
            }
            if row.iter().any(|&p| !(p >= T::zero() && p <= T::one())) {
                return Err(Error::InvalidChain(format!("row {i} has an entry outside [0,1]")));
            }
            let s: T = row.iter().copied().sum();
            if (s - T::one()).abs() > tol {
                return Err(Error::InvalidChain(format!("row {i} sums to {s}, not 1")));
            }
        }
        let cumulative = transition
            .iter()
            .map(|row| {
                let mut acc = 0.0;
                row.iter()
                    .map(|p| {
                        acc += p.as_f64();
                        acc
                    })
                    .collect()
            })
            .collect();
        Ok(Self { values, transition, initial, cumulative })
    }

    /// Chain whose every row equals `spec.probs`.
    pub fn from_iid(spec: &IidSpec<T>) -> Result<Self> {
        spec.validate()?;
        let rows = vec![spec.probs.clone(); spec.values.len()];
        Self::new(spec.values.clone(), rows, 0)
    }

    /// Single-state chain that always takes `value`.
    pub fn constant(value: u64) -> Self {
        Self::new(vec![value], vec![vec![T::one()]], 0).expect("constant chain is valid")
    }

    pub fn with_initial(mut self, initial: usize) -> Result<Self> {
        if initial >= self.len() {
            return Err(Error::InvalidChain(format!("initial index {initial} out of range")));
        }
        self.initial = initial;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[u64] {
        &self.values
    }

    pub fn value(&self, index: usize) -> u64 {
        self.values[index]
    }

    pub fn max_value(&self) -> u64 {
        self.values.iter().copied().max().unwrap_or(0)
    }

    pub fn initial(&self) -> usize {
        self.initial
    }

    pub fn row(&self, index: usize) -> &[T] {
        &self.transition[index]
    }

    pub fn transition(&self) -> &[Vec<T>] {
        &self.transition
    }

    /// Draws the successor of `current`.
    pub fn sample_next<R: Rng + ?Sized>(&self, current: usize, rng: &mut R) -> Result<usize> {
        let cum = self.cumulative.get(current).ok_or_else(|| {
            Error::InvalidArgument(format!("state index {current} out of range 0..{}", self.len()))
        })?;
        let u: f64 = rng.gen();
        // the last cumulative entry may round below 1; fall back to the last
        // positive-probability state
        Ok(cum
            .iter()
            .position(|&c| u < c)
            .unwrap_or_else(|| self.transition[current].iter().rposition(|&p| p > T::zero()).unwrap()))
    }

    /// Stationary distribution `pi` with `pi P = pi`, `sum pi = 1`.
    pub fn stationary_distribution(&self) -> Result<Vec<T>> {
        let n = self.len();
        // rows of (P^T - I) with the last equation replaced by normalisation
        let mut a = vec![vec![T::zero(); n]; n];
        for (i, row) in a.iter_mut().enumerate() {
            for (j, entry) in row.iter_mut().enumerate() {
                *entry = self.transition[j][i] - if i == j { T::one() } else { T::zero() };
            }
        }
        a[n - 1] = vec![T::one(); n];
        let mut b = vec![T::zero(); n];
        b[n - 1] = T::one();
        solve_dense(a, b)
    }

    /// Mean value under the stationary distribution.
    pub fn stationary_mean(&self) -> Result<T> {
        let pi = self.stationary_distribution()?;
        Ok(pi.iter().zip(&self.values).map(|(&p, &v)| p * T::of_u64(v)).sum())
    }

    /// Returns a copy whose values are `round(value * factor)`.
    pub fn scaled_values(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.values = self.values.iter().map(|&v| (v as f64 * factor).round() as u64).collect();
        out
    }

    fn reachable_from(&self, start: usize, forward: bool) -> Vec<bool> {
        let n = self.len();
        let mut seen = vec![false; n];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                let p = if forward { self.transition[i][j] } else { self.transition[j][i] };
                if p > T::zero() && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen
    }

    /// Every state reaches state 0 and is reachable from it.
    pub fn is_irreducible(&self) -> bool {
        self.reachable_from(0, true).iter().all(|&b| b) && self.reachable_from(0, false).iter().all(|&b| b)
    }

    /// Period of the class of state 0: gcd of `level(i) + 1 - level(j)` over
    /// all edges `i -> j` reachable from 0, with BFS levels from state 0.
    pub fn period(&self) -> u64 {
        let n = self.len();
        let mut level = vec![usize::MAX; n];
        level[0] = 0;
        let mut queue = std::collections::VecDeque::from([0usize]);
        let mut g = 0u64;
        while let Some(i) = queue.pop_front() {
            for j in 0..n {
                if self.transition[i][j] <= T::zero() {
                    continue;
                }
                if level[j] == usize::MAX {
                    level[j] = level[i] + 1;
                    queue.push_back(j);
                } else {
                    let d = (level[i] as i64 + 1 - level[j] as i64).unsigned_abs();
                    g = gcd(g, d);
                }
            }
        }
        g
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// i.i.d. process: a chain with identical rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IidSpec<T> {
    pub values: Vec<u64>,
    pub probs: Vec<T>,
}

impl<T: Scalar> IidSpec<T> {
    pub fn new(values: Vec<u64>, probs: Vec<T>) -> Result<Self> {
        let spec = Self { values, probs };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() || self.values.len() != self.probs.len() {
            return Err(Error::InvalidChain(format!(
                "{} values but {} probabilities",
                self.values.len(),
                self.probs.len()
            )));
        }
        let s: T = self.probs.iter().copied().sum();
        if (s - T::one()).abs() > T::stochastic_tol() {
            return Err(Error::InvalidChain(format!("probabilities sum to {s}")));
        }
        if self.probs.iter().any(|&p| !(p >= T::zero() && p <= T::one())) {
            return Err(Error::InvalidChain("probability outside [0,1]".into()));
        }
        Ok(())
    }
}

/// Chain whose every row equals `spec.probs`.
pub fn iid_to_chain<T: Scalar>(spec: &IidSpec<T>) -> Result<MarkovChain<T>> {
    MarkovChain::from_iid(spec)
}

/// Number of energy blocks per EV, uniform on `{1, ..., c}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchLaw {
    c: u32,
}

impl BatchLaw {
    pub fn new(c: u32) -> Result<Self> {
        if c == 0 {
            return Err(Error::InvalidArgument("batch law needs C >= 1".into()));
        }
        Ok(Self { c })
    }

    pub fn max_blocks(&self) -> u32 {
        self.c
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        if self.c == 1 {
            1
        } else {
            rng.gen_range(1..=self.c)
        }
    }

    /// Probability of each block count.
    pub fn prob<T: Scalar>(&self) -> T {
        T::one() / T::of_u64(self.c as u64)
    }
}

/// Demand arrivals `sum_{i=1}^{a} L_i` for `a` EVs.
pub fn sample_batch_arrival<R: Rng + ?Sized>(a: u64, law: BatchLaw, rng: &mut R) -> u64 {
    (0..a).map(|_| law.sample(rng) as u64).sum()
}

/// The three exogenous processes of the station.
#[derive(Debug, Clone, PartialEq)]
pub struct ExogenousChains<T> {
    pub arrivals: MarkovChain<T>,
    pub renewables: MarkovChain<T>,
    pub prices: MarkovChain<T>,
}

impl<T: Scalar> ExogenousChains<T> {
    pub fn new(arrivals: MarkovChain<T>, renewables: MarkovChain<T>, prices: MarkovChain<T>) -> Self {
        Self { arrivals, renewables, prices }
    }
}
