// `!(x > 0.0)` guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod convexgeom;
pub mod dp;
pub mod error;
pub mod linalg;
pub mod measure;
pub mod nonsmooth;
pub mod report;
pub mod setintegral;

pub use error::{Error, Result};
