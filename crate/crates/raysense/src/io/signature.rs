use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use raysense_core::signature::{FeatureSpec, Provenance, Signature};

use super::binary::{count, write_f32s, write_header, LeReader};
use super::{FormatError, SIGNATURE_MAGIC};
use crate::error::{Error, Result};

/// Reads an `RSSG` signature file.
pub fn read_signature<R: Read>(reader: R) -> std::result::Result<Signature, FormatError> {
    let mut r = LeReader::new(reader);
    r.header(SIGNATURE_MAGIC)?;
    let m = r.u64("m")?;
    let k = r.u32("k")?;
    let c = r.u32("channel count")?;
    let dim = r.u32("dimension")?;
    let kappa = r.u32("kappa")?;
    let flags = r.u8("feature flags")?;
    let spec = FeatureSpec::from_flags(flags, kappa as usize).map_err(|e| FormatError::Invalid(e.to_string()))?;
    if spec.channels(dim as usize) != c as usize {
        return Err(FormatError::Invalid(format!(
            "channel count {c} does not match flags {flags:#04b} with d={dim}, kappa={kappa}"
        )));
    }
    let tensor = r.f32s(count(&[m, u64::from(k), u64::from(c)], "tensor")?, "tensor")?;
    let ids = r.i64s(count(&[m, u64::from(k), u64::from(kappa)], "sensed ids")?, "sensed ids")?;
    let json = r.string("provenance")?;
    r.finish()?;
    let ids = ids
        .into_iter()
        .map(|id| u64::try_from(id).map_err(|_| FormatError::Invalid(format!("negative sensed id {id}"))))
        .collect::<std::result::Result<Vec<u64>, _>>()?;
    let provenance: Provenance =
        serde_json::from_str(&json).map_err(|e| FormatError::Invalid(format!("provenance: {e}")))?;
    Signature::from_parts(m as usize, k as usize, dim as usize, spec, tensor, ids, provenance)
        .map_err(|e| FormatError::Invalid(e.to_string()))
}

pub fn write_signature<W: Write>(mut w: W, sig: &Signature) -> std::io::Result<()> {
    write_header(&mut w, SIGNATURE_MAGIC)?;
    let (m, k, c) = sig.shape();
    w.write_all(&(m as u64).to_le_bytes())?;
    w.write_all(&(k as u32).to_le_bytes())?;
    w.write_all(&(c as u32).to_le_bytes())?;
    w.write_all(&(sig.dim() as u32).to_le_bytes())?;
    w.write_all(&(sig.spec().kappa as u32).to_le_bytes())?;
    w.write_all(&[sig.spec().flags()])?;
    write_f32s(&mut w, sig.tensor().iter().copied())?;
    for &id in sig.sensed_ids() {
        w.write_all(&(id as i64).to_le_bytes())?;
    }
    let json = serde_json::to_string(sig.provenance()).map_err(std::io::Error::other)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(json.as_bytes())?;
    w.flush()
}

pub fn load_signature(path: &Path) -> Result<Signature> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_signature(BufReader::new(file)).map_err(|e| Error::format(path, e))
}

pub fn save_signature(sig: &Signature, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_signature(BufWriter::new(file), sig).map_err(|e| Error::io(path, e))
}
