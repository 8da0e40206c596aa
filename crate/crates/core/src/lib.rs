pub mod analysis;
pub mod cli;
pub mod config;
pub mod error;
pub mod eval;
pub mod models;
pub mod numeric;
pub mod objectives;
pub mod report;
pub mod synthdata;
pub mod trainer;
pub mod verify;

pub use error::{Error, Result};
