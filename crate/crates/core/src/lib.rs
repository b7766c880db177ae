//! Semiclassical pseudo-differential and functional calculus on the Heisenberg group.

pub mod almost_analytic;
pub mod error;
pub mod experiments;
pub mod fc;
pub mod group;
pub mod hs;
pub mod jet;
pub mod poly;
pub mod quad;
pub mod rep;
pub mod smooth;
pub mod symbol;
pub mod weyl;

pub use error::{Error, Result};
