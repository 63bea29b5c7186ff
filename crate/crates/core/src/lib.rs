//! Differential-privacy accounting for Adaptive Batch Linear Queries (ABLQ)
//! under deterministic, Poisson and shuffle batch sampling.
//!
//! Upper bounds come from the closed form (deterministic), a discretized
//! privacy-loss-distribution accountant and an RDP accountant (Poisson).
//! Lower bounds come from explicit events (shuffle, Poisson). A Monte-Carlo
//! oracle estimates hockey-stick divergences of the dominating pairs directly.

pub mod accounting;
pub mod deterministic;
pub mod error;
pub mod gaussian;
pub mod lower_bounds;
mod numeric;
pub mod oracle;
pub mod pld;
pub mod rdp;
pub mod sweep;
pub mod validation;

pub use accounting::{
    group_privacy_zero_out_to_substitution, invert_curve, AccountingConfig, Adjacency, BoundFlag,
    BoundKind, Mechanism, Method, PrivacyBound, DEFAULT_EPSILON_BRACKET,
};
pub use deterministic::{delta_deterministic, eps_deterministic, log_delta_deterministic};
pub use error::{AccountingError, Result};
pub use pld::{delta_poisson, eps_poisson, DiscretePld, PldOptions, Rounding};
pub use rdp::{delta_rdp, eps_rdp, RdpCurve};
pub use lower_bounds::{
    poisson_halfspace_delta_lower, shuffle_delta_lower, shuffle_eps_lower, ShuffleBoundParams,
};
