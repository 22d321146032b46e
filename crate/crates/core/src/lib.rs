pub mod autodiff;
pub mod checkpoint;
pub mod contextualizer;
pub mod corpus;
pub mod encoder;
pub mod encoding;
pub mod error;
pub mod inference;
pub mod metrics;
pub mod model;
pub mod objectives;
pub mod params;
pub mod synthetic;
pub mod tokenizer;
pub mod trainer;

pub use error::{Error, Result};
