//! Coded caching with multiple file libraries.
//!
//! The crate computes delivery rates for caching networks whose server holds
//! several libraries, each user requesting one file from every library:
//!
//! * [`model`]: network descriptions and demand enumeration,
//! * [`tradeoff`]: exact piecewise-linear single-library memory-rate curves,
//! * [`allocation`]: memory-sharing rates, the greedy cache split and its
//!   brute-force oracle, λ-sweeps,
//! * [`converse`]: the file-concatenation lower bound and gap reports,
//! * [`sim`]: a bit-exact placement/delivery/decoding simulator with
//!   exhaustive demand verification.
//!
//! All analytical quantities are exact rationals.

pub mod allocation;
pub mod converse;
pub mod error;
pub mod model;
pub mod rational;
pub mod sim;
pub mod tradeoff;

pub use error::{Error, Result};
pub use model::{DemandVector, LibrarySpec, NetworkConfig};
pub use rational::Rational;
pub use tradeoff::{PiecewiseLinearTradeoff, TradeoffKind, TradeoffSource};
