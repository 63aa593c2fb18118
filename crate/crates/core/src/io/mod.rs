//! Point-cloud file formats: whitespace text, the packed `FSEG` binary format
//! and LAS 1.2-1.4 (formats 0-7).

mod binary;
mod las;
mod text;

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use byteorder::{ByteOrder, LittleEndian};

use crate::{Error, PointCloud, Result, Scalar};

pub use binary::{decode_binary, encode_binary};
pub use las::{decode_las, encode_las, TREE_ID_CHANNEL};
pub use text::{decode_text, encode_text};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    /// `x y z [treeID annotated_flag]` per line.
    Text,
    /// Packed little-endian `FSEG`.
    Binary,
    Las,
}

impl Format {
    /// Picks the format from a file extension.
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        match ext.as_deref() {
            Some("txt" | "xyz" | "pts") => Ok(Format::Text),
            Some("bin" | "fseg") => Ok(Format::Binary),
            Some("las") => Ok(Format::Las),
            _ => Err(Error::UnknownFormat(path.display().to_string())),
        }
    }
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "text" | "txt" => Ok(Format::Text),
            "binary" | "bin" | "fseg" => Ok(Format::Binary),
            "las" => Ok(Format::Las),
            _ => Err(Error::UnknownFormat(s.to_string())),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Text => "text",
            Format::Binary => "binary",
            Format::Las => "las",
        })
    }
}

/// Reads a cloud; the format is taken from the extension unless given.
pub fn read_cloud<T: Scalar>(path: impl AsRef<Path>, format: Option<Format>) -> Result<PointCloud<T>> {
    let path = path.as_ref();
    let format = match format {
        Some(f) => f,
        None => Format::from_path(path)?,
    };
    let bytes = fs::read(path)?;
    match format {
        Format::Text => decode_text(&String::from_utf8_lossy(&bytes)),
        Format::Binary => decode_binary(&bytes),
        Format::Las => decode_las(&bytes),
    }
}

/// Writes a cloud through a temporary file so a failed write leaves no
/// partial output behind.
pub fn write_cloud<T: Scalar>(cloud: &PointCloud<T>, path: impl AsRef<Path>, format: Option<Format>) -> Result<()> {
    let path = path.as_ref();
    let format = match format {
        Some(f) => f,
        None => Format::from_path(path)?,
    };
    let bytes = match format {
        Format::Text => encode_text(cloud).into_bytes(),
        Format::Binary => encode_binary(cloud),
        Format::Las => encode_las(cloud)?,
    };
    write_atomic(path, &bytes)
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = Path::new(&tmp);
    let res = (|| {
        let mut f = fs::File::create(tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(tmp, path)
    })();
    if res.is_err() {
        let _ = fs::remove_file(tmp);
    }
    Ok(res?)
}

/// Bounds-checked little-endian cursor that reports byte offsets on failure.
pub(crate) struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub(crate) fn at(buf: &'a [u8], pos: usize) -> Self {
        Self { buf, pos }
    }

    pub(crate) fn pos(&self) -> usize {
        self.pos
    }

    pub(crate) fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len().saturating_sub(self.pos) < n {
            return Err(Error::Format {
                offset: self.pos as u64,
                message: format!("truncated {what}: need {n} bytes, {} left", self.buf.len().saturating_sub(self.pos)),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    pub(crate) fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(LittleEndian::read_u16(self.take(2, what)?))
    }

    pub(crate) fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(LittleEndian::read_u32(self.take(4, what)?))
    }

    pub(crate) fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(LittleEndian::read_u64(self.take(8, what)?))
    }

    pub(crate) fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(LittleEndian::read_f64(self.take(8, what)?))
    }
}

pub(crate) fn format_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Format { offset: offset as u64, message: message.into() }
}
