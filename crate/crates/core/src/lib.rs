pub mod corpus;
pub mod dsp;
pub mod error;
pub mod metrics;
pub mod mixer;
pub mod nn;
pub mod separator;
pub mod text;

pub use error::{Error, Result};
