//! On-disk formats: text and binary point clouds (`RSPC`), ray sets
//! (`RSRY`) and signatures (`RSSG`). All binary integers and floats are
//! little-endian.

mod binary;
mod cloud;
mod rays;
mod signature;

use std::io;

use thiserror::Error;

pub use cloud::{load_cloud, read_cloud_binary, read_cloud_text, save_cloud, write_cloud_binary, write_cloud_text, CloudFormat};
pub use rays::{load_rays, read_rays, save_rays, write_rays};
pub use signature::{load_signature, read_signature, save_signature, write_signature};

pub const CLOUD_MAGIC: [u8; 4] = *b"RSPC";
pub const RAYS_MAGIC: [u8; 4] = *b"RSRY";
pub const SIGNATURE_MAGIC: [u8; 4] = *b"RSSG";
/// The only version written and accepted by every format.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic {found:?}, expected {expected:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("file truncated while reading {0}")]
    Truncated(&'static str),
    #[error("line {line}: expected {expected} columns, found {found}")]
    ColumnCount { line: usize, expected: usize, found: usize },
    #[error("line {line}: cannot parse {token:?}")]
    Parse { line: usize, token: String },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("no points")]
    Empty,
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}
