//! Visual search and OOTD recommendation engine.
//!
//! Modules follow the serving flow: [`ingest`] prepares data, [`pipeline`]
//! analyzes uploaded outfit photos, [`vecindex`] serves similar-item search,
//! [`metric`] trains and evaluates search embeddings, [`stylerec`] produces
//! curated feeds and style-leader suggestions, and [`engine`] ties the stores
//! together behind a request/response surface.

pub mod engine;
pub mod error;
pub mod ingest;
pub mod metric;
pub mod model;
pub mod pipeline;
pub mod stylerec;
pub mod vecindex;

pub use error::{Error, Result};
