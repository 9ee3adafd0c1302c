//! Command-line pipeline and HTTP service for the package-selection
//! knowledge graph.

pub mod api;
pub mod config;
pub mod engine;
pub mod error;
pub mod evaluate;
pub mod pipeline;

pub use config::Config;
pub use engine::{Engine, RecommendRequest, RecommendResponse, ServiceError};
pub use error::CliError;
