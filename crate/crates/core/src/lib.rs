pub mod acquisition;
pub mod covariance;
pub mod error;
pub mod gp;
pub mod harness;
pub mod hyperprior;
pub mod linalg;
pub mod mean;
pub mod objectives;
pub mod optimize;
pub mod qmc;

pub use error::{Error, Result};
