//! Optimal lottery allocation of network throughput to agents with
//! rank-dependent (CPT) preferences.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod avg;
pub mod barrier;
pub mod catalog;
pub mod cpt;
pub mod error;
pub mod kernel;
pub mod model;
pub mod oracle;
pub mod permsearch;
pub mod reduction;
pub mod solver_fix;

pub use cpt::{Agent, ValueFunction, WeightingFunction, Weights};
pub use error::{Error, Result, Violation};
pub use model::{LotteryScheme, NetworkInstance, Permutation, PriceSystem};
