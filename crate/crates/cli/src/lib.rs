//! Command line and HTTP front end for the `qirat` retrieval engine.

pub mod commands;
pub mod engine;
pub mod opts;
pub mod server;
