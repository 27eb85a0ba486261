pub mod compress;
pub mod corpus;
pub mod distill;
pub mod error;
pub mod evalsuite;
pub mod linalg;
pub mod lm;
pub mod modelstore;
pub mod pipeline;
pub mod train;

pub use error::{Error, Result};
