pub mod error;
pub mod linalg;
pub mod lti;
pub mod momentmatch;
pub mod optim;
pub mod poly;
pub mod siggen;
pub mod sim;
pub mod clred;

pub use error::{Error, ErrorKind, Result};
