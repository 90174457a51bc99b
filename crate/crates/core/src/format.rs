//! Fixed 64-byte little-endian header shared by every binary file the crate
//! writes (embedding matrices and the three comparison index formats).
//!
//! | bytes  | field                                   |
//! |--------|-----------------------------------------|
//! | 0..4   | magic (`EMBS`, `SQIX`, `PQIX`, `HNSX`)  |
//! | 4..8   | version, u32 (currently 1)              |
//! | 8      | dtype, u8 (0 = float32, 1 = float16)    |
//! | 9      | normalized flag, u8 (0 / 1)             |
//! | 10..16 | reserved, zero                          |
//! | 16..20 | dim, u32                                |
//! | 20..24 | reserved, zero                          |
//! | 24..32 | count, u64                              |
//! | 32..64 | format-specific parameters, else zero   |

use std::io::{self, Read, Write};

use thiserror::Error;

pub const HEADER_LEN: usize = 64;
pub const FORMAT_VERSION: u32 = 1;

/// Errors raised while decoding one of the binary formats.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },
    #[error("unsupported format version {0} (this build reads version {FORMAT_VERSION})")]
    UnsupportedVersion(u32),
    #[error("unknown dtype tag {0}")]
    UnknownDtype(u8),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },
    #[error("{trailing} unexpected trailing bytes after payload")]
    TrailingBytes { trailing: u64 },
    #[error("count {count} x dim {dim} overflows addressable size")]
    Overflow { count: u64, dim: u32 },
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("corrupt payload: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[repr(u8)]
pub enum Dtype {
    #[default]
    F32 = 0,
    F16 = 1,
}

impl Dtype {
    pub fn from_tag(tag: u8) -> Result<Self, FormatError> {
        match tag {
            0 => Ok(Dtype::F32),
            1 => Ok(Dtype::F16),
            other => Err(FormatError::UnknownDtype(other)),
        }
    }

    pub fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F16 => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Header {
    pub magic: [u8; 4],
    pub dtype: Dtype,
    pub normalized: bool,
    pub dim: u32,
    pub count: u64,
    pub params: [u8; 32],
}

impl Header {
    pub fn new(magic: [u8; 4], dtype: Dtype, normalized: bool, dim: u32, count: u64) -> Self {
        Self {
            magic,
            dtype,
            normalized,
            dim,
            count,
            params: [0; 32],
        }
    }

    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut buf = [0u8; HEADER_LEN];
        buf[0..4].copy_from_slice(&self.magic);
        buf[4..8].copy_from_slice(&FORMAT_VERSION.to_le_bytes());
        buf[8] = self.dtype as u8;
        buf[9] = self.normalized as u8;
        buf[16..20].copy_from_slice(&self.dim.to_le_bytes());
        buf[24..32].copy_from_slice(&self.count.to_le_bytes());
        buf[32..64].copy_from_slice(&self.params);
        buf
    }

    /// Decodes and validates a header. `expected` is the magic the caller
    /// wants; anything else is a [`FormatError::BadMagic`].
    pub fn parse(buf: &[u8], expected: &[u8; 4]) -> Result<Self, FormatError> {
        if buf.len() < HEADER_LEN {
            return Err(FormatError::Truncated {
                expected: HEADER_LEN as u64,
                found: buf.len() as u64,
            });
        }
        let magic: [u8; 4] = buf[0..4].try_into().unwrap();
        if &magic != expected {
            return Err(FormatError::BadMagic {
                expected: String::from_utf8_lossy(expected).into_owned(),
                found: String::from_utf8_lossy(&magic).into_owned(),
            });
        }
        let version = u32::from_le_bytes(buf[4..8].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(FormatError::UnsupportedVersion(version));
        }
        let dtype = Dtype::from_tag(buf[8])?;
        let normalized = match buf[9] {
            0 => false,
            1 => true,
            other => return Err(FormatError::Corrupt(format!("normalized flag {other}"))),
        };
        let dim = u32::from_le_bytes(buf[16..20].try_into().unwrap());
        let count = u64::from_le_bytes(buf[24..32].try_into().unwrap());
        let params: [u8; 32] = buf[32..64].try_into().unwrap();
        Ok(Self {
            magic,
            dtype,
            normalized,
            dim,
            count,
            params,
        })
    }

    /// `count * dim` as a checked element count.
    pub fn elements(&self) -> Result<usize, FormatError> {
        let overflow = || FormatError::Overflow {
            count: self.count,
            dim: self.dim,
        };
        let count = usize::try_from(self.count).map_err(|_| overflow())?;
        let n = count.checked_mul(self.dim as usize).ok_or_else(overflow)?;
        // Keep byte offsets representable too.
        n.checked_mul(8).ok_or_else(overflow)?;
        Ok(n)
    }

    pub fn param_u32(&self, slot: usize) -> u32 {
        u32::from_le_bytes(self.params[slot * 4..slot * 4 + 4].try_into().unwrap())
    }

    pub fn set_param_u32(&mut self, slot: usize, value: u32) {
        self.params[slot * 4..slot * 4 + 4].copy_from_slice(&value.to_le_bytes());
    }

    pub fn param_u64(&self, slot: usize) -> u64 {
        u64::from_le_bytes(self.params[slot * 8..slot * 8 + 8].try_into().unwrap())
    }

    pub fn set_param_u64(&mut self, slot: usize, value: u64) {
        self.params[slot * 8..slot * 8 + 8].copy_from_slice(&value.to_le_bytes());
    }
}

/// Cursor over a fully read file body that reports truncation in the
/// format's own terms.
pub(crate) struct Payload<'a> {
    buf: &'a [u8],
    pos: usize,
    total_expected: Option<u64>,
}

impl<'a> Payload<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Self {
            buf,
            pos: 0,
            total_expected: None,
        }
    }

    /// Fixes the byte count the payload must have, failing early if it is short.
    pub(crate) fn expect_len(&mut self, expected: u64) -> Result<(), FormatError> {
        let found = self.buf.len() as u64;
        if found < expected {
            return Err(FormatError::Truncated { expected, found });
        }
        self.total_expected = Some(expected);
        Ok(())
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let out = &self.buf[self.pos..end];
                self.pos = end;
                Ok(out)
            }
            None => Err(FormatError::Truncated {
                expected: self
                    .total_expected
                    .unwrap_or((self.pos as u64).saturating_add(n as u64)),
                found: self.buf.len() as u64,
            }),
        }
    }

    pub(crate) fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn finish(self) -> Result<(), FormatError> {
        let trailing = (self.buf.len() - self.pos) as u64;
        if trailing > 0 {
            return Err(FormatError::TrailingBytes { trailing });
        }
        Ok(())
    }
}

pub(crate) fn read_file(path: &std::path::Path) -> Result<Vec<u8>, FormatError> {
    let mut file = std::fs::File::open(path)?;
    let mut buf = Vec::new();
    file.read_to_end(&mut buf)?;
    Ok(buf)
}

pub(crate) fn write_f32s<W: Write>(out: &mut W, values: &[f32]) -> io::Result<()> {
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&bytes)
}

pub(crate) fn decode_f32s(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout_is_fixed() {
        let mut h = Header::new(*b"EMBS", Dtype::F16, true, 384, 50_000);
        h.set_param_u32(1, 7);
        let bytes = h.to_bytes();
        assert_eq!(&bytes[0..4], b"EMBS");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(bytes[8], 1);
        assert_eq!(bytes[9], 1);
        assert!(bytes[10..16].iter().all(|&b| b == 0));
        assert_eq!(u32::from_le_bytes(bytes[16..20].try_into().unwrap()), 384);
        assert_eq!(u64::from_le_bytes(bytes[24..32].try_into().unwrap()), 50_000);
        assert_eq!(u32::from_le_bytes(bytes[36..40].try_into().unwrap()), 7);
        assert_eq!(Header::parse(&bytes, b"EMBS").unwrap(), h);
    }

    #[test]
    fn header_rejects_wrong_magic_and_version() {
        let bytes = Header::new(*b"EMBS", Dtype::F32, false, 4, 1).to_bytes();
        assert!(matches!(
            Header::parse(&bytes, b"SQIX"),
            Err(FormatError::BadMagic { .. })
        ));
        let mut v2 = bytes;
        v2[4] = 2;
        assert!(matches!(
            Header::parse(&v2, b"EMBS"),
            Err(FormatError::UnsupportedVersion(2))
        ));
        assert!(matches!(
            Header::parse(&bytes[..10], b"EMBS"),
            Err(FormatError::Truncated { .. })
        ));
    }

    #[test]
    fn element_count_overflow_is_detected() {
        let h = Header::new(*b"EMBS", Dtype::F32, false, u32::MAX, u64::MAX / 2);
        assert!(matches!(h.elements(), Err(FormatError::Overflow { .. })));
    }
}
