pub mod error;
pub mod feasibility;
pub mod linalg;
pub mod optimize;
pub mod oracles;
pub mod refine;

pub use error::{Certificate, Error, Result};
