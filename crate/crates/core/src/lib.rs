//! Credibility indicators for news articles shared on social media.

pub mod analytics;
pub mod assets;
pub mod content;
pub mod ingestion;
pub mod platform;
pub mod references;
pub mod reviews;
pub mod segmentation;
pub mod social;
pub mod store;
pub mod synthetic;
pub mod text;
