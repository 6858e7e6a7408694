pub mod bounds;
pub mod dos;
pub mod error;
pub mod laplacian;
pub mod perturb;
pub mod pointproc;
pub mod tree;

pub use error::{Error, Result};
