//! Command implementations and the HTTP service behind the `tcube` binary.

pub mod commands;
pub mod data;
pub mod manifest;
pub mod server;
