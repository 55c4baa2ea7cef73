//! Line-outage identification for power grids from phasor-angle
//! measurements that may contain bad data.

pub mod baselines;
pub mod bench;
pub mod error;
pub mod grid;
pub mod identify;
pub mod rng;
pub mod sim;
pub mod sparse;
pub mod swamp;
mod union_find;

pub use error::{Error, Result};
