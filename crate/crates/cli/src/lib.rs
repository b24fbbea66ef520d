//! Command-line front end for `plnma`: dataset fits, single contrasts and
//! simulation runs.

pub mod analysis;
pub mod error;
pub mod input;
pub mod report;
pub mod simulate;
