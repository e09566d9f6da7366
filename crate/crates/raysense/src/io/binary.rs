use std::io::{self, Read, Write};

use super::FormatError;

/// Reads fixed-width little-endian fields, reporting short reads as
/// truncation of the named field.
pub(crate) struct LeReader<R> {
    inner: R,
}

impl<R: Read> LeReader<R> {
    pub fn new(inner: R) -> Self {
        Self { inner }
    }

    pub fn bytes<const N: usize>(&mut self, what: &'static str) -> Result<[u8; N], FormatError> {
        let mut buf = [0u8; N];
        self.inner.read_exact(&mut buf).map_err(|e| truncated(e, what))?;
        Ok(buf)
    }

    pub fn u8(&mut self, what: &'static str) -> Result<u8, FormatError> {
        Ok(self.bytes::<1>(what)?[0])
    }

    pub fn u32(&mut self, what: &'static str) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.bytes(what)?))
    }

    pub fn u64(&mut self, what: &'static str) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.bytes(what)?))
    }

    pub fn header(&mut self, magic: [u8; 4]) -> Result<(), FormatError> {
        let found = self.bytes::<4>("magic")?;
        if found != magic {
            return Err(FormatError::BadMagic { expected: magic, found });
        }
        let version = self.u32("version")?;
        if version != super::FORMAT_VERSION {
            return Err(FormatError::UnsupportedVersion(version));
        }
        Ok(())
    }

    /// `count` values of `W` bytes each, read in bounded chunks so a
    /// corrupt header cannot trigger a huge allocation up front.
    fn records<const W: usize, T>(
        &mut self,
        count: usize,
        what: &'static str,
        decode: impl Fn([u8; W]) -> T,
    ) -> Result<Vec<T>, FormatError> {
        const CHUNK: usize = 1 << 16;
        let mut out = Vec::with_capacity(count.min(CHUNK));
        let mut buf = vec![0u8; CHUNK.min(count) * W];
        let mut left = count;
        while left > 0 {
            let n = left.min(CHUNK);
            let bytes = &mut buf[..n * W];
            self.inner.read_exact(bytes).map_err(|e| truncated(e, what))?;
            out.extend(bytes.chunks_exact(W).map(|c| decode(c.try_into().expect("chunk width"))));
            left -= n;
        }
        Ok(out)
    }

    pub fn f32s(&mut self, count: usize, what: &'static str) -> Result<Vec<f32>, FormatError> {
        self.records(count, what, f32::from_le_bytes)
    }

    pub fn i32s(&mut self, count: usize, what: &'static str) -> Result<Vec<i32>, FormatError> {
        self.records(count, what, i32::from_le_bytes)
    }

    pub fn i64s(&mut self, count: usize, what: &'static str) -> Result<Vec<i64>, FormatError> {
        self.records(count, what, i64::from_le_bytes)
    }

    /// Length-prefixed (u64) UTF-8 string.
    pub fn string(&mut self, what: &'static str) -> Result<String, FormatError> {
        let len = usize::try_from(self.u64(what)?).map_err(|_| FormatError::Invalid(format!("{what} too long")))?;
        let bytes = self.records(len, what, |[b]: [u8; 1]| b)?;
        String::from_utf8(bytes).map_err(|_| FormatError::Invalid(format!("{what} is not UTF-8")))
    }

    /// Errors unless the stream is exhausted.
    pub fn finish(mut self) -> Result<(), FormatError> {
        let mut probe = [0u8; 1];
        match self.inner.read(&mut probe)? {
            0 => Ok(()),
            _ => Err(FormatError::Invalid("trailing bytes after payload".into())),
        }
    }
}

fn truncated(e: io::Error, what: &'static str) -> FormatError {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        FormatError::Truncated(what)
    } else {
        FormatError::Io(e)
    }
}

pub(crate) fn write_header<W: Write>(w: &mut W, magic: [u8; 4]) -> io::Result<()> {
    w.write_all(&magic)?;
    w.write_all(&super::FORMAT_VERSION.to_le_bytes())
}

pub(crate) fn write_f32s<W: Write>(w: &mut W, values: impl IntoIterator<Item = f32>) -> io::Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Checked `a * b * ...` for element counts taken from headers.
pub(crate) fn count(dims: &[u64], what: &'static str) -> Result<usize, FormatError> {
    dims.iter()
        .try_fold(1u64, |acc, &d| acc.checked_mul(d))
        .and_then(|n| usize::try_from(n).ok())
        .ok_or_else(|| FormatError::Invalid(format!("{what} size overflows")))
}
