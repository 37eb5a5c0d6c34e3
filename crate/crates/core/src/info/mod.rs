//! Information measures over finite alphabets. All quantities are in bits.

mod estimate;
mod measures;
mod rate;
mod table;

pub use estimate::{estimate_mi_from_samples, EstimatorId, MIEstimate, DEFAULT_BOOTSTRAP_REPS, MIN_SAMPLES};
pub use measures::{conditional_entropy, entropy, joint_entropy, kl_divergence, mutual_information, Axis};
#[cfg(test)]
pub(crate) use measures::entropy_unchecked;
pub use rate::{epistemic_entropy_rate, DEFAULT_FLOOR};
pub use table::{validate_probability_vector, Channel, JointTable, INPUT_TOLERANCE};
