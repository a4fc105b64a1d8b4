//! Command-line driver and query service for multi-viewpoint maps.

pub mod api;
pub mod commands;
pub mod server;

pub use api::{Api, ApiError};
