//! Kinetic BGK-alignment model on a periodic 1-D phase space.

pub mod field;
pub mod snapshot;
pub mod solver;

pub use field::*;
pub use snapshot::Snapshot;
pub use solver::*;
