//! Command-line tools and the HTTP service over a coding workspace.
//!
//! A workspace is a plain directory (see [`workspace`]); the CLI and the
//! service read and write the same files, and both produce scorecards by
//! calling into the core crate, so their JSON output is byte-identical.

pub mod cli;
pub mod server;
pub mod workspace;

pub use server::{router, DEFAULT_PORT};
pub use workspace::{Workspace, WorkspaceError};
