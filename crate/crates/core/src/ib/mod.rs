//! Information-bottleneck encoders, frontier sweeps, efficiency and gaps.
//!
//! The frontier is the relevance-rate curve `I(Z;Y)` against `I(X;Z)`;
//! distortion is read as `I(X;Y) - I(Z;Y)`.

mod frontier;
mod gap;
mod solver;

pub use frontier::{
    default_betas, log_spaced, sweep_frontier, FrontierCurve, SweepOptions, DEFAULT_BETA_COUNT, DEFAULT_BETA_RANGE,
    DEFAULT_RESTARTS, MONOTONE_TOL,
};
pub use gap::{encoder_information, epsilon_ib, rd_gap, RdGap};
pub use solver::{
    ib_fixed_point, ib_from_encoder, IBPoint, IbOptions, DEFAULT_MAX_ITER, DEFAULT_TOL, INIT_CONCENTRATION, ZERO_RATE,
};
