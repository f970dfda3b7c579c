//! Delay-optimal scheduling of EV charging at a station with a renewable
//! storage battery and Markov-modulated grid prices.
//!
//! The crate contains the finite constrained MDP (value iteration, Lagrangian
//! search over the cost multiplier), checks of the structural and
//! optimality conditions of its solutions, two closed-form heuristic
//! policies, and a discrete-time simulator that runs any policy against the
//! arrival, renewable and price processes with random charging demands per EV.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the `*64`
//! aliases below fix it to `f64`.
//!
//! ```
//! use evsched::mdp::solve_discounted;
//! use evsched::{ExogenousChains, IidSpec, MarkovChain, MdpModel, ModelParams};
//!
//! # fn main() -> evsched::Result<()> {
//! let iid = |v: Vec<u64>, p: Vec<f64>| MarkovChain::from_iid(&IidSpec::new(v, p)?);
//! let chains = ExogenousChains::new(
//!     iid(vec![0, 8], vec![0.5, 0.5])?,
//!     iid(vec![0, 5, 10], vec![0.1, 0.4, 0.5])?,
//!     iid(vec![5, 10, 20], vec![0.2, 0.3, 0.5])?,
//! );
//! let mut params = ModelParams::<f64>::station(8, Some(10));
//! params.block_energy = 1;
//! params.q_max = 40;
//! params.beta = 1.0;
//! let model = MdpModel::new(params, chains)?;
//! let sol = solve_discounted(&model, 1e-8, 100_000)?;
//! assert!(sol.values.is_finite());
//! # Ok(())
//! # }
//! ```

pub mod chain;
pub mod conditions;
pub mod constrained;
pub mod error;
pub mod eval;
pub mod limit;
mod linalg;
pub mod mdp;
pub mod policies;
pub mod queue;
pub mod rng;
pub mod scalar;
pub mod sim;
pub mod structure;

pub use chain::{iid_to_chain, sample_batch_arrival, BatchLaw, ExogenousChains, IidSpec, MarkovChain};
pub use constrained::{solve_constrained, BetaPoint, BetaSearchResult, Evaluator, SearchConfig};
pub use error::{Error, Result};
pub use limit::{vanishing_discount_limit, VanishingLimit, DEFAULT_SCHEDULE};
pub use eval::{estimate, evaluate_exact, evaluate_mixture, evaluate_policy, Evaluation, MixedPolicy, MonteCarlo};
pub use mdp::{Action, MdpModel, ModelParams, PolicyTable, SystemState, TransformedAction, ValueTable};
pub use queue::{DualQueue, EvRecord};
pub use policies::{ConservativePolicy, Observation, Policy, RadicalPolicy, ServeNone, TablePolicy};
pub use scalar::Scalar;
pub use structure::{check_structure, min_mixture_gap, min_mixture_holds, Property, StructureReport};
pub use sim::{run, run_replications, SimConfig, SimulationTrace, Summary};

pub type MarkovChain64 = MarkovChain<f64>;
pub type ExogenousChains64 = ExogenousChains<f64>;
pub type ModelParams64 = ModelParams<f64>;
pub type MdpModel64 = MdpModel<f64>;
pub type ValueTable64 = ValueTable<f64>;
