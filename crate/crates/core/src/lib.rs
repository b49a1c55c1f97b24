//! Networks of phase-coupled oscillators that store binary patterns as
//! phase-locked attractors and learn them with a local Hebbian rule.

pub mod encoding;
pub mod energy;
pub mod error;
pub mod hidden;
pub mod phase;
pub mod plasticity;
pub mod protocol;
pub mod stability;
pub mod sysid;

pub use error::{Error, Result};
