//! Command-line interface, HTTP service and remote backend client for cover generation.

pub mod cli;
pub mod client;
pub mod config;
pub mod server;

pub use client::HttpBackend;
pub use config::ServiceConfig;
