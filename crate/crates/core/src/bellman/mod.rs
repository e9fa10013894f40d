//! Dynamic-programming side of the crate.
//!
//! [`value_iteration`] solves the stochastic-shortest-path Bellman equation
//! on a grid and is the reference every closed form is checked against.
//! [`piecewise`] computes exact piecewise-affine policies for heterogeneous
//! demands by propagating a piecewise-quadratic continuation cost.
//! [`renewal`] turns a stationary policy into per-cycle and long-run costs.

pub mod piecewise;
pub mod renewal;
pub mod value_iteration;

pub use piecewise::{
    algorithm1_policy, ClassPolicy, PiecewiseAffinePolicy, PiecewiseQuadratic, PolicySegment,
    Quadratic, DEFAULT_MAX_ROUNDS, DEFAULT_ROUND_TOL,
};
pub use renewal::{
    general_average_cost, limit_cycle_cost, long_run_average_cost, policy_value, relative_value,
    renewal_cycle_cost,
};
pub use value_iteration::{
    value_iterate_bernoulli, value_iterate_general, SolveStats, ValueFunctionGrid, ValueIteration,
    DEFAULT_GRID_SIZE,
};
