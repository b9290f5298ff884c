//! Data-driven computational mechanics on constitutive manifolds.

pub mod assembly;
pub mod beam;
pub mod checks;
pub mod cli;
pub mod constitutive;
pub mod error;
pub mod io;
pub mod linalg;
pub mod newton;
pub mod truss;

pub use error::{Error, Result};
