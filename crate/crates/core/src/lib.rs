//! Private read/write over dropout-prone, cross-subspace-aligned coded storage.
//!
//! A user privately reads one of `K` submodels from `N` servers and privately
//! writes an increment back, while any `X` servers learn nothing about the
//! stored data, any `T` learn nothing about which submodel was touched, and
//! any `X_delta` learn nothing about the increment. Servers may drop out of
//! either phase; write dropouts keep stale storage that stays consistent.
//!
//! Module map:
//! - [`field`]: prime-field arithmetic and Gaussian elimination
//! - [`params`]: configuration, thresholds, poles, per-round batching
//! - [`codec`]: storage encoding and the full-database decode oracle
//! - [`client`]: queries, increments and answer decoding
//! - [`server`]: answers and the storage update
//! - [`sim`]: multi-round orchestration and cost accounting
//! - [`audit`]: exact enumeration of collusion views and round certificates

pub mod audit;
pub mod client;
pub mod codec;
pub mod error;
pub mod field;
pub mod params;
pub mod server;
pub mod sim;

pub use error::{Error, Result};
pub use num_rational::Ratio;
