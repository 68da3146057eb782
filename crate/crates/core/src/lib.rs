//! Exact selective inference after randomized feature selection.
//!
//! The crate runs randomized selection programs (LASSO, marginal screening,
//! SLOPE), reduces the selection event for one selected coefficient to a
//! bivariate truncated-Gaussian law, and turns the resulting pivot into
//! confidence intervals. Polyhedral, data-splitting and UV baselines plus a
//! Monte-Carlo harness are included for comparison.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN.

pub mod conditioning;
pub mod error;
pub mod inference;
pub mod linalg;
pub mod numerics;
pub mod selection;
pub mod study;

pub use error::{Error, Result};
