pub mod augment;
pub mod datamodel;
pub mod error;
pub mod eval;
pub mod locmodel;
pub mod numerics;
pub mod seed;
pub mod simenv;

pub use error::{Error, Result};

