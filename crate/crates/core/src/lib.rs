//! Conditional mean and volatility modeling for daily price series.

pub mod cli;
pub mod error;
pub mod estimation;
pub mod forecast;
pub mod model;
pub mod ols;
pub mod optim;
pub mod series;
pub mod special;
pub mod vol;

pub use error::{Error, Result};
