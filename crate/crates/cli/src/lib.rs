//! Command line front end and HTTP service for the deliberation engine.

pub mod chat;
pub mod config;
pub mod server;
