//! IDX container reader/writer.
//!
//! Images use magic `0x00000803` with three big-endian `u32` dimensions
//! `(n, rows, cols)` followed by row-major pixel bytes. Labels use magic
//! `0x00000801` with a single count followed by one byte per label.
//! Either file may be wrapped in gzip; the wrapper is detected from the
//! `0x1F 0x8B` prefix rather than the file extension.

use std::fs;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;
use thiserror::Error;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

/// Largest dimension accepted in a header.
pub const MAX_DIMENSION: u32 = 100_000_000;

#[derive(Debug, Error)]
pub enum IdxError {
    #[error("bad magic word: expected {expected:#010x}, found {found:#010x}")]
    BadMagic { expected: u32, found: u32 },
    #[error("truncated IDX data: expected {expected} bytes, found {actual}")]
    Truncated { expected: u64, actual: u64 },
    #[error("dimension {value} exceeds the limit of {MAX_DIMENSION}")]
    DimensionOverflow { value: u32 },
    #[error("label {label} at position {position} is not below {classes}")]
    LabelOutOfRange {
        position: usize,
        label: u8,
        classes: usize,
    },
    #[error("I/O error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Dense `n x rows x cols` tensor of raw pixel bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageTensor {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

impl ImageTensor {
    pub fn pixels_per_image(&self) -> usize {
        self.rows * self.cols
    }

    pub fn image(&self, index: usize) -> &[u8] {
        let d = self.pixels_per_image();
        &self.pixels[index * d..(index + 1) * d]
    }
}

fn read_be_u32(bytes: &[u8], offset: usize) -> Result<u32, IdxError> {
    match bytes.get(offset..offset + 4) {
        Some(word) => Ok(u32::from_be_bytes([word[0], word[1], word[2], word[3]])),
        None => Err(IdxError::Truncated {
            expected: (offset + 4) as u64,
            actual: bytes.len() as u64,
        }),
    }
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<(), IdxError> {
    let found = read_be_u32(bytes, 0)?;
    if found != expected {
        return Err(IdxError::BadMagic { expected, found });
    }
    Ok(())
}

fn check_dimension(value: u32) -> Result<u64, IdxError> {
    if value > MAX_DIMENSION {
        return Err(IdxError::DimensionOverflow { value });
    }
    Ok(u64::from(value))
}

/// Parses an uncompressed IDX image file.
pub fn parse_idx_images(bytes: &[u8]) -> Result<ImageTensor, IdxError> {
    check_magic(bytes, IMAGE_MAGIC)?;
    let n = check_dimension(read_be_u32(bytes, 4)?)?;
    let rows = check_dimension(read_be_u32(bytes, 8)?)?;
    let cols = check_dimension(read_be_u32(bytes, 12)?)?;
    let expected = n
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .and_then(|v| v.checked_add(16))
        .unwrap_or(u64::MAX);
    if bytes.len() as u64 != expected {
        return Err(IdxError::Truncated {
            expected,
            actual: bytes.len() as u64,
        });
    }
    Ok(ImageTensor {
        count: n as usize,
        rows: rows as usize,
        cols: cols as usize,
        pixels: bytes[16..].to_vec(),
    })
}

/// Parses an uncompressed IDX label file, rejecting labels `>= classes`.
pub fn parse_idx_labels(bytes: &[u8], classes: usize) -> Result<Vec<u8>, IdxError> {
    check_magic(bytes, LABEL_MAGIC)?;
    let n = check_dimension(read_be_u32(bytes, 4)?)?;
    let expected = 8 + n;
    if bytes.len() as u64 != expected {
        return Err(IdxError::Truncated {
            expected,
            actual: bytes.len() as u64,
        });
    }
    let labels = bytes[8..].to_vec();
    if let Some((position, &label)) = labels
        .iter()
        .enumerate()
        .find(|(_, &l)| usize::from(l) >= classes)
    {
        return Err(IdxError::LabelOutOfRange {
            position,
            label,
            classes,
        });
    }
    Ok(labels)
}

pub fn write_idx_images(tensor: &ImageTensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + tensor.pixels.len());
    out.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    for dim in [tensor.count, tensor.rows, tensor.cols] {
        out.extend_from_slice(&(dim as u32).to_be_bytes());
    }
    out.extend_from_slice(&tensor.pixels);
    out
}

pub fn write_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Strips a gzip wrapper if present.
pub fn maybe_gunzip(bytes: Vec<u8>) -> std::io::Result<Vec<u8>> {
    if bytes.starts_with(&[0x1F, 0x8B]) {
        let mut out = Vec::new();
        GzDecoder::new(bytes.as_slice()).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(bytes)
    }
}

pub fn read_idx_file(path: &Path) -> Result<Vec<u8>, IdxError> {
    let io_err = |source| IdxError::Io {
        path: path.display().to_string(),
        source,
    };
    let raw = fs::read(path).map_err(io_err)?;
    maybe_gunzip(raw).map_err(io_err)
}
