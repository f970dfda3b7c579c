use serde::{Deserialize, Serialize};

use crate::chain::ExogenousChains;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Station and optimisation parameters.
///
/// Energy quantities are integers in energy units; the battery grid step is
/// one unit. `e_max = None` means an unbounded battery (simulation only).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams<T> {
    /// Number of charge points `M`.
    pub charge_points: u64,
    /// Energy delivered by one charge point in one period.
    pub block_energy: u64,
    /// Period length.
    pub tau: T,
    /// Battery capacity.
    pub e_max: Option<u64>,
    /// Queue truncation bound for the finite MDP.
    pub q_max: u64,
    /// Lagrange multiplier on the cost.
    pub beta: T,
    /// Discount factor.
    pub alpha: T,
    /// Average-cost bound. May be infinite.
    pub cost_bound: T,
    /// Maximum energy blocks per EV.
    pub max_blocks: u32,
    /// Restrict battery draws to at most the energy being charged.
    pub energy_filter: bool,
}

impl<T: Scalar> ModelParams<T> {
    /// Station of the numerical study: `tau = 1`, 10 energy units per block.
    pub fn station(charge_points: u64, e_max: Option<u64>) -> Self {
        Self {
            charge_points,
            block_energy: 10,
            tau: T::one(),
            e_max,
            q_max: 1_000,
            beta: T::zero(),
            alpha: T::of(0.99),
            cost_bound: T::infinity(),
            max_blocks: 1,
            energy_filter: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParams(m.to_string()));
        if self.charge_points == 0 {
            return bad("charge_points must be positive");
        }
        if self.block_energy == 0 {
            return bad("block_energy must be positive");
        }
        if !(self.tau > T::zero()) || !self.tau.is_finite() {
            return bad("tau must be positive and finite");
        }
        if !(self.beta >= T::zero()) || !self.beta.is_finite() {
            return bad("beta must be non-negative and finite");
        }
        if !(self.alpha >= T::zero() && self.alpha < T::one()) {
            return bad("alpha must lie in [0, 1)");
        }
        if !(self.cost_bound > T::zero()) {
            return bad("cost_bound must be positive");
        }
        if self.max_blocks == 0 {
            return bad("max_blocks must be at least 1");
        }
        Ok(())
    }

    /// `e_max` for a finite model.
    pub fn battery_capacity(&self) -> Result<u64> {
        self.e_max
            .ok_or_else(|| Error::InvalidParams("a finite battery capacity is required".into()))
    }

    pub fn with_beta(&self, beta: T) -> Self {
        Self { beta, ..self.clone() }
    }

    pub fn with_alpha(&self, alpha: T) -> Self {
        Self { alpha, ..self.clone() }
    }
}

/// `(q, a, e_b, e_a, p)`: queue length, arrival-state index, battery energy,
/// renewable-state index, price-state index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SystemState {
    pub q: u64,
    pub a: usize,
    pub e_b: u64,
    pub e_a: usize,
    pub p: usize,
}

impl SystemState {
    pub fn new(q: u64, a: usize, e_b: u64, e_a: usize, p: usize) -> Self {
        Self { q, a, e_b, e_a, p }
    }
}

impl std::fmt::Display for SystemState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(q={}, a={}, e_b={}, e_a={}, p={})", self.q, self.a, self.e_b, self.e_a, self.p)
    }
}

/// `k` demands charged and `battery_draw = w * tau` energy units taken from
/// the battery.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Action {
    pub k: u64,
    pub battery_draw: u64,
}

impl Action {
    pub fn new(k: u64, battery_draw: u64) -> Self {
        Self { k, battery_draw }
    }

    /// Battery power `w`.
    pub fn power<T: Scalar>(&self, tau: T) -> T {
        T::of_u64(self.battery_draw) / tau
    }
}

/// `u = q - k` EVs left waiting, `eta = e_b - w tau` energy left in the battery.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct TransformedAction {
    pub u: u64,
    pub eta: u64,
}

impl TransformedAction {
    pub fn new(u: u64, eta: u64) -> Self {
        Self { u, eta }
    }

    pub fn from_action(x: &SystemState, act: &Action) -> Self {
        Self { u: x.q - act.k, eta: x.e_b - act.battery_draw }
    }

    pub fn to_action(&self, x: &SystemState) -> Action {
        Action { k: x.q - self.u, battery_draw: x.e_b - self.eta }
    }
}

/// Extents of the truncated state space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub q_max: u64,
    pub e_max: u64,
    pub n_a: usize,
    pub n_e: usize,
    pub n_p: usize,
}

impl Dims {
    pub fn n_exo(&self) -> usize {
        self.n_a * self.n_e * self.n_p
    }

    pub fn n_states(&self) -> usize {
        (self.q_max as usize + 1) * (self.e_max as usize + 1) * self.n_exo()
    }

    #[inline]
    pub fn exo_index(&self, a: usize, e_a: usize, p: usize) -> usize {
        (a * self.n_e + e_a) * self.n_p + p
    }

    #[inline]
    pub fn exo_parts(&self, exo: usize) -> (usize, usize, usize) {
        (exo / (self.n_e * self.n_p), (exo / self.n_p) % self.n_e, exo % self.n_p)
    }

    /// Flat index; the exogenous triple varies fastest.
    #[inline]
    pub fn index(&self, x: &SystemState) -> usize {
        self.slot(x.q, x.e_b) * self.n_exo() + self.exo_index(x.a, x.e_a, x.p)
    }

    #[inline]
    pub(crate) fn slot(&self, q: u64, e_b: u64) -> usize {
        q as usize * (self.e_max as usize + 1) + e_b as usize
    }

    pub fn state(&self, index: usize) -> SystemState {
        let n_exo = self.n_exo();
        let (slot, exo) = (index / n_exo, index % n_exo);
        let width = self.e_max as usize + 1;
        let (a, e_a, p) = self.exo_parts(exo);
        SystemState { q: (slot / width) as u64, a, e_b: (slot % width) as u64, e_a, p }
    }

    pub fn contains(&self, x: &SystemState) -> bool {
        x.q <= self.q_max && x.e_b <= self.e_max && x.a < self.n_a && x.e_a < self.n_e && x.p < self.n_p
    }

    pub fn states(&self) -> impl Iterator<Item = SystemState> + '_ {
        (0..self.n_states()).map(move |i| self.state(i))
    }
}

/// Parameters and chains of a finite, solvable instance.
#[derive(Debug, Clone, PartialEq)]
pub struct MdpModel<T> {
    pub params: ModelParams<T>,
    pub chains: ExogenousChains<T>,
    dims: Dims,
}

impl<T: Scalar> MdpModel<T> {
    pub fn new(params: ModelParams<T>, chains: ExogenousChains<T>) -> Result<Self> {
        params.validate()?;
        let e_max = params.battery_capacity()?;
        if params.max_blocks != 1 {
            return Err(Error::InvalidParams("the MDP solver handles one block per EV only".into()));
        }
        let max_arrival = chains.arrivals.max_value();
        if params.q_max < 2 * max_arrival {
            return Err(Error::InvalidParams(format!(
                "q_max = {} must be at least twice the largest arrival value {}",
                params.q_max, max_arrival
            )));
        }
        let dims = Dims {
            q_max: params.q_max,
            e_max,
            n_a: chains.arrivals.len(),
            n_e: chains.renewables.len(),
            n_p: chains.prices.len(),
        };
        Ok(Self { params, chains, dims })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn n_states(&self) -> usize {
        self.dims.n_states()
    }

    pub fn states(&self) -> impl Iterator<Item = SystemState> + '_ {
        self.dims.states()
    }

    pub fn price(&self, x: &SystemState) -> T {
        T::of_u64(self.chains.prices.value(x.p))
    }

    pub fn with_params(&self, params: ModelParams<T>) -> Result<Self> {
        Self::new(params, self.chains.clone())
    }
}
