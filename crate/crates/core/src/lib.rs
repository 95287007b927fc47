//! Discrete harmonic maps into non-positively curved spaces.

pub mod error;
pub mod linalg;
pub mod target_spaces;
pub mod domain_complex;
pub mod barycenter;
pub mod harmonic_solver;
pub mod smooth_checks;
pub mod corlette;
pub mod foliation_trees;

pub use error::{Error, Result};
