//! File formats, experiment runners and the `rs` command line built on
//! [`raysense_core`].

pub mod cli;
mod error;
pub mod experiments;
pub mod io;
pub mod pipeline;
pub mod report;

pub use error::{Error, Result};
pub use raysense_core;
