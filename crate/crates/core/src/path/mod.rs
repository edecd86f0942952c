//! Brownian increments and the forward Euler pass.

mod forward;
mod noise;

pub use forward::{simulate_forward, ForwardPath};
pub use noise::{sample_increment_pair, IncrementSampler, NoisePath};
