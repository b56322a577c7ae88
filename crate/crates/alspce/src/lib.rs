//! Std companion to `alspce-core`: run configuration, CSV and JSON
//! artifacts, and the command implementations behind the `alspce` binary.

pub mod commands;
pub mod config;
pub mod io;
pub mod summary;
pub mod testbed;

pub use config::RunConfig;
pub use summary::Summary;
pub use testbed::Testbed;
