//! JSON output with run provenance.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Where an output came from. Contains nothing machine- or
/// time-dependent, so identical runs give identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub core_version: &'static str,
    pub command: String,
    pub seed: Option<u64>,
    /// Input path → SHA-256 of its contents.
    pub inputs: BTreeMap<String, String>,
}

impl Provenance {
    pub fn new(command: impl Into<String>, seed: Option<u64>) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            core_version: raysense_core::VERSION,
            command: command.into(),
            seed,
            inputs: BTreeMap::new(),
        }
    }

    /// Records the hash of an input file.
    pub fn input(&mut self, path: &Path) -> Result<()> {
        let hash = sha256_file(path)?;
        self.inputs.insert(path.display().to_string(), hash);
        Ok(())
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Serialize)]
struct Envelope<'a, T> {
    provenance: &'a Provenance,
    result: &'a T,
}

/// Pretty JSON `{provenance, result}`.
pub fn to_json<T: Serialize>(provenance: &Provenance, result: &T) -> serde_json::Result<String> {
    let mut s = serde_json::to_string_pretty(&Envelope { provenance, result })?;
    s.push('\n');
    Ok(s)
}

/// Writes the report to `out`, or to stdout when `out` is `None`.
pub fn emit<T: Serialize>(out: Option<&Path>, provenance: &Provenance, result: &T) -> Result<()> {
    let text = to_json(provenance, result).map_err(|e| Error::Json {
        path: out.unwrap_or(Path::new("-")).to_path_buf(),
        source: e,
    })?;
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Error::io(path, e)),
        None => match std::io::stdout().lock().write_all(text.as_bytes()) {
            // a reader such as `head` closing the pipe early is not a failure
            Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
            r => r.map_err(|e| Error::io("<stdout>", e)),
        },
    }
}
