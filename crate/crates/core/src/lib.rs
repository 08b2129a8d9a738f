//! Surrogate-assisted black-box optimization over small molecular graphs.

pub mod bbo;
pub mod bench;
pub mod evolve;
pub mod molgraph;
pub mod objective;
pub mod runlog;
pub mod shingles;
pub mod surrogate;
