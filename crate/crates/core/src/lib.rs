pub mod cavity;
pub mod config;
pub mod constants;
pub mod ensemble;
pub mod error;
pub mod model;
pub mod output;
pub mod scenarios;

pub use error::{Error, Result};
