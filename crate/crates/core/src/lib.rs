//! Small-noise Levy-driven semilinear evolution equations in Galerkin
//! truncation.
//!
//! The crate computes Laplace limits `lim (1/n) log E exp(n g(X_n(T)))` two
//! ways: by Monte Carlo over the jump SDE, and by maximizing a deterministic
//! control objective whose running cost is the Legendre transform of the
//! noise's Laplace exponent. The same control machinery yields the
//! large-deviation rate function, and the [`verify`] module cross-checks the
//! routes against each other and against closed forms.

pub mod control;
pub mod cost;
pub mod error;
pub mod experiments;
pub mod laplace;
pub mod noise;
pub mod numerics;

pub use error::{Error, Result};
pub mod report;
pub mod simulate;
pub mod system;
pub mod verify;
