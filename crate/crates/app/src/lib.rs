//! Command-line pipeline and HTTP service around the `hashtag_privacy`
//! library.

pub mod commands;
pub mod config;
pub mod manifest;
pub mod server;
