use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use raysense_core::PointCloud;

use super::binary::{count, write_f32s, write_header, LeReader};
use super::{FormatError, CLOUD_MAGIC};
use crate::error::{usage, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    /// Whitespace-separated decimals, one point per line, `#` comments,
    /// optionally a trailing integer label column.
    TextXyz { labels: bool },
    /// `RSPC` binary with float32 coordinates.
    BinaryF32,
}

impl CloudFormat {
    /// `.rspc` files are binary, everything else is text without labels.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("rspc") => CloudFormat::BinaryF32,
            _ => CloudFormat::TextXyz { labels: false },
        }
    }
}

impl FromStr for CloudFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text-xyz" => Ok(CloudFormat::TextXyz { labels: false }),
            "text-xyz-labels" => Ok(CloudFormat::TextXyz { labels: true }),
            "binary-f32" => Ok(CloudFormat::BinaryF32),
            other => Err(usage(format!(
                "unknown cloud format {other:?} (text-xyz, text-xyz-labels, binary-f32)"
            ))),
        }
    }
}

pub fn read_cloud_text<R: BufRead>(reader: R, labels: bool) -> std::result::Result<PointCloud, FormatError> {
    let mut columns = None;
    let mut coords = Vec::new();
    let mut label_values = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = trimmed.split_whitespace().collect();
        let expected = *columns.get_or_insert(tokens.len());
        if tokens.len() != expected {
            return Err(FormatError::ColumnCount {
                line: line_no,
                expected,
                found: tokens.len(),
            });
        }
        let (values, label) = if labels {
            let (last, rest) = tokens.split_last().expect("nonempty line");
            let label = last.parse::<i32>().map_err(|_| FormatError::Parse {
                line: line_no,
                token: (*last).to_owned(),
            })?;
            (rest, Some(label))
        } else {
            (&tokens[..], None)
        };
        if values.is_empty() {
            return Err(FormatError::ColumnCount {
                line: line_no,
                expected: expected + 1,
                found: expected,
            });
        }
        for tok in values {
            let x: f64 = tok.parse().map_err(|_| FormatError::Parse {
                line: line_no,
                token: (*tok).to_owned(),
            })?;
            if !x.is_finite() {
                return Err(FormatError::NonFinite(format!("line {line_no}")));
            }
            coords.push(x);
        }
        label_values.extend(label);
    }
    let Some(columns) = columns else {
        return Err(FormatError::Empty);
    };
    let dim = if labels { columns - 1 } else { columns };
    let cloud = PointCloud::new(dim, coords).map_err(|e| FormatError::Invalid(e.to_string()))?;
    if labels {
        cloud.with_labels(label_values).map_err(|e| FormatError::Invalid(e.to_string()))
    } else {
        Ok(cloud)
    }
}

/// Writes coordinates with shortest round-trip formatting, so reading
/// the text back reproduces every `f64` exactly.
pub fn write_cloud_text<W: Write>(mut w: W, cloud: &PointCloud) -> std::io::Result<()> {
    for (i, p) in cloud.points().enumerate() {
        let mut first = true;
        for x in p {
            if !first {
                w.write_all(b" ")?;
            }
            write!(w, "{x}")?;
            first = false;
        }
        if let Some(labels) = cloud.labels() {
            write!(w, " {}", labels[i])?;
        }
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn read_cloud_binary<R: Read>(reader: R) -> std::result::Result<PointCloud, FormatError> {
    let mut r = LeReader::new(reader);
    r.header(CLOUD_MAGIC)?;
    let dim = r.u32("dimension")? as usize;
    let n = r.u64("point count")?;
    if n == 0 {
        return Err(FormatError::Empty);
    }
    if dim == 0 {
        return Err(FormatError::Invalid("dimension 0".into()));
    }
    let total = count(&[n, dim as u64], "coordinate block")?;
    let coords = r.f32s(total, "coordinates")?;
    if let Some(i) = coords.iter().position(|x| !x.is_finite()) {
        return Err(FormatError::NonFinite(format!("point {}", i / dim)));
    }
    let has_labels = r.u8("label flag")?;
    let cloud = PointCloud::new(dim, coords.into_iter().map(f64::from).collect())
        .map_err(|e| FormatError::Invalid(e.to_string()))?;
    let cloud = match has_labels {
        0 => cloud,
        1 => {
            let labels = r.i32s(cloud.len(), "labels")?;
            cloud.with_labels(labels).map_err(|e| FormatError::Invalid(e.to_string()))?
        }
        other => return Err(FormatError::Invalid(format!("label flag {other}"))),
    };
    r.finish()?;
    Ok(cloud)
}

/// Coordinates are narrowed to float32.
pub fn write_cloud_binary<W: Write>(mut w: W, cloud: &PointCloud) -> std::io::Result<()> {
    write_header(&mut w, CLOUD_MAGIC)?;
    w.write_all(&(cloud.dim() as u32).to_le_bytes())?;
    w.write_all(&(cloud.len() as u64).to_le_bytes())?;
    write_f32s(&mut w, cloud.coords().iter().map(|&x| x as f32))?;
    match cloud.labels() {
        Some(labels) => {
            w.write_all(&[1])?;
            for l in labels {
                w.write_all(&l.to_le_bytes())?;
            }
        }
        None => w.write_all(&[0])?,
    }
    w.flush()
}

/// Loads a cloud; its id becomes the file name.
pub fn load_cloud(path: &Path, format: CloudFormat) -> Result<PointCloud> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let cloud = match format {
        CloudFormat::TextXyz { labels } => read_cloud_text(reader, labels),
        CloudFormat::BinaryF32 => read_cloud_binary(reader),
    }
    .map_err(|e| Error::format(path, e))?;
    let id = path.file_name().map(|n| n.to_string_lossy().into_owned());
    Ok(match id {
        Some(id) => cloud.with_id(id),
        None => cloud,
    })
}

pub fn save_cloud(cloud: &PointCloud, path: &Path, format: CloudFormat) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let w = BufWriter::new(file);
    match format {
        CloudFormat::TextXyz { labels } => {
            if labels && cloud.labels().is_none() {
                return Err(usage("cloud has no labels to write"));
            }
            if !labels && cloud.labels().is_some() {
                let plain = PointCloud::new(cloud.dim(), cloud.coords().to_vec())?;
                return write_cloud_text(w, &plain).map_err(|e| Error::io(path, e));
            }
            write_cloud_text(w, cloud)
        }
        CloudFormat::BinaryF32 => write_cloud_binary(w, cloud),
    }
    .map_err(|e| Error::io(path, e))
}
