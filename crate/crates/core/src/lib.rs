pub mod adapter;
pub mod app;
mod codec;
pub mod config;
pub mod critical;
pub mod data;
pub mod error;
pub mod federated;
pub mod metrics;
pub mod model;
pub mod numcore;
pub mod scenario;
pub mod theory;

pub use error::{Error, Result};
