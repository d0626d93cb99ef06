//! Nonsmooth functions: an expression language and its subdifferential calculus.

mod calculus;
mod expr;
pub mod oracle;

pub use calculus::{
    active_tol, analyze, clarke_dd, clarke_gradient, directional_derivative, exactness_certified,
    is_regular, limiting_subdiff, strict_derivative, Analysis, SubdiffResult, ACTIVE_REL_TOL,
};
pub use expr::FnExpr;
