//! The single-block (C = 1) Markov decision process: truncated state space,
//! feasible actions, transition kernel, stage costs and discounted value
//! iteration.

mod kernel;
mod model;
mod solve;
mod table_io;

pub use kernel::{feasible_actions, grid_cost, is_feasible, meets_energy_filter};
pub use model::{Action, Dims, MdpModel, ModelParams, SystemState, TransformedAction};
pub use solve::{
    solve_discounted, span, value_iteration_step, PolicyTable, Solution, ValueIteration, ValueTable,
    DEFAULT_TOLERANCE,
};
pub use table_io::{read_policy, read_values, write_policy, write_values};
