pub mod attribution;
pub mod autodiff;
pub mod backbone;
pub mod cli;
pub mod data;
pub mod error;
pub mod harness;
pub mod pal_loss;
pub mod prior;
pub mod rng;

pub use error::{Error, Result};
