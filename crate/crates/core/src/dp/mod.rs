//! Stochastic dynamic programming on finite grids and the value-function sensitivity checks.

mod bellman;
pub mod desk;
mod model;
mod nlp;
mod sensitivity;

pub use bellman::{
    bellman_operator, finite_horizon_oracle, finite_horizon_table, policy_multifunction, solve,
    value_iteration, PolicyTable, Solution, Table, ValueTable, TOL_ARGMIN,
};
pub use model::{grid_1d, grid_2d, Bound, ConstraintMap, DPModel, ACTIVE_TOL, FEAS_TOL};
pub use nlp::{
    lagrange_multiplier_set, mfcq_check, nlp_value_subdiff_check, Mfcq, Multiplier, MultiplierSet,
    SELECTOR_LIP_CAP,
};
pub use sensitivity::{
    check_viability, default_radius, envelope_check, euler_inclusion_residual, euler_residual_at,
    limiting_euler_check, normal_cone, strict_value_derivative_check, value_function_subdiff,
    SubdiffKind, Viability, ENVELOPE_TOL, EULER_TOL,
};
