//! Desk-scale laboratory for compression-efficiency measurements on exactly
//! computable discrete environments.
//!
//! The crate is organised bottom-up:
//!
//! - [`info`]: entropies, mutual information, sample estimators and model
//!   surprise rates over finite alphabets.
//! - [`ib`]: self-consistent information-bottleneck solver, frontier sweeps,
//!   IB efficiency and rate-distortion gaps.
//! - [`env`]: seeded synthetic environments that expose exact ground truth
//!   next to their sample streams.
//! - [`models`]: online correlational and generative learners with explicit
//!   two-part code accounting.
//! - [`dynamics`]: exception-decay recurrence and growth-exponent fitting.
//! - [`hierarchy`]: stacked encoders and per-layer efficiency.
//! - [`harness`]: seeded protocol runners, persistence and verification.
//!
//! Data-parallel loops (restarts, bootstrap replicates, trials) run on rayon
//! when the `parallel` feature is enabled and fall back to plain iteration
//! otherwise; see [`exec::Execution`].

pub mod dynamics;
pub mod env;
pub mod error;
pub mod exec;
pub mod harness;
pub mod hierarchy;
pub mod ib;
pub mod info;
pub mod models;
pub mod seed;
pub mod stats;

pub use error::{LabError, Result};
pub use exec::Execution;
pub use info::{Channel, JointTable};
