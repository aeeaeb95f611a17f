//! Numerical laboratory for mixing of infinite-measure suspension flows.

pub mod dist;
pub mod error;
pub mod flow;
pub mod lsv;
pub mod quad;
pub mod regvar;
pub mod rng;
pub mod stable;
pub mod verify;

pub use error::{Error, Result};
