//! Location inference from hashtags, location-privacy metrics, and
//! obfuscation advice that trades semantic utility for privacy.

pub mod corpus;
pub mod embedding;
pub mod forest;
pub mod metrics;
pub mod obfuscate;
pub mod advisor;
pub mod eval;
pub mod service;
