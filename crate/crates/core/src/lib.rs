pub mod bench;
pub mod cli;
pub mod config;
pub mod distill;
pub mod error;
pub mod evolve;
pub mod net;
pub mod numkernel;
pub mod persist;
pub mod pipeline;
pub mod rate;
pub mod rng;
pub mod search;
pub mod space;
pub mod task;
pub mod verify;

pub use error::{Error, Result};

#[cfg(test)]
pub(crate) mod testkit;
