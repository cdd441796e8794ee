pub mod counterfactual;
pub mod data;
pub mod embedding;
pub mod error;
pub mod evaluation;
pub mod forest;
pub mod proximity;
pub mod registry;
pub mod tally;

pub use error::{Error, Result};
