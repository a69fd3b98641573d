//! Continuous general-dyne filtering of a bosonic mode coupled to a
//! partially purified thermal bath.

pub mod analytics;
pub mod ensemble;
pub mod error;
pub mod fock;
pub mod gaussian;
pub mod io;
pub mod noise;

pub use error::{Error, Result};
