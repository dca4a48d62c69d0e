//! HTTP service and command-line interface over the diagnosis workbench.

pub mod api;
pub mod cli;
pub mod series_io;
pub mod server;
