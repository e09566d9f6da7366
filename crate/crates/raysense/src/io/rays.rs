use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use raysense_core::rays::{Ray, RayMethod, RaySet, DEFAULT_TAU};

use super::binary::{count, write_f32s, write_header, LeReader};
use super::{FormatError, RAYS_MAGIC};
use crate::error::{Error, Result};

/// Reads an `RSRY` ray file.
///
/// The format keeps only the samples, so the seed comes back as 0 and
/// the method parameter is recovered from the geometry: `L` is the first
/// ray's length for R1; R2 reports the default `τ` and the largest
/// endpoint norm as sphere radius.
pub fn read_rays<R: Read>(reader: R) -> std::result::Result<RaySet, FormatError> {
    let mut r = LeReader::new(reader);
    r.header(RAYS_MAGIC)?;
    let code = r.u8("method")?;
    let method = RayMethod::from_code(code).ok_or_else(|| FormatError::Invalid(format!("unknown ray method {code}")))?;
    let m = r.u64("ray count")?;
    let k = r.u32("samples per ray")? as usize;
    let dim = r.u32("dimension")? as usize;
    if m == 0 || k < 2 || dim == 0 {
        return Err(FormatError::Invalid(format!("bad ray set shape m={m} k={k} d={dim}")));
    }
    let per_ray = k * dim;
    let total = count(&[m, per_ray as u64], "sample block")?;
    let values = r.f32s(total, "ray samples")?;
    r.finish()?;
    if values.iter().any(|x| !x.is_finite()) {
        return Err(FormatError::NonFinite("ray samples".into()));
    }
    let rays: Vec<Ray> = values
        .chunks_exact(per_ray)
        .map(|c| Ray::from_samples(method, dim, c.iter().map(|&x| f64::from(x)).collect()))
        .collect::<raysense_core::Result<_>>()
        .map_err(|e| FormatError::Invalid(e.to_string()))?;
    let (param, radius) = match method {
        RayMethod::R1 => (rays[0].length(), 0.0),
        RayMethod::R2 => {
            let radius = rays
                .iter()
                .flat_map(|r| [r.sample(0), r.sample(k - 1)])
                .map(raysense_core::linalg::norm)
                .fold(0.0, f64::max);
            (DEFAULT_TAU, radius)
        }
    };
    RaySet::from_rays(rays, method, param, radius, 0).map_err(|e| FormatError::Invalid(e.to_string()))
}

pub fn write_rays<W: Write>(mut w: W, rays: &RaySet) -> std::io::Result<()> {
    write_header(&mut w, RAYS_MAGIC)?;
    w.write_all(&[rays.method().code()])?;
    w.write_all(&(rays.len() as u64).to_le_bytes())?;
    w.write_all(&(rays.k() as u32).to_le_bytes())?;
    w.write_all(&(rays.dim() as u32).to_le_bytes())?;
    write_f32s(&mut w, rays.rays().iter().flat_map(|r| r.coords().iter().map(|&x| x as f32)))?;
    w.flush()
}

pub fn load_rays(path: &Path) -> Result<RaySet> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_rays(BufReader::new(file)).map_err(|e| Error::format(path, e))
}

pub fn save_rays(rays: &RaySet, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_rays(BufWriter::new(file), rays).map_err(|e| Error::io(path, e))
}
