//! Instrumental-variable identification of second-order modulus models with
//! unmeasured state disturbances.

pub mod error;
pub mod estim;
pub mod sim;
pub mod som;
pub mod vessel;

pub use error::{Error, Result};
