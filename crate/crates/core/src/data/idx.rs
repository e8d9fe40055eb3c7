//! The IDX format used by the MNIST distribution: a big-endian header
//! `00 00 <type> <ndims>` followed by `ndims` u32 dimension sizes and the
//! raw payload. Only unsigned-byte payloads (type `0x08`) are supported.

use std::path::Path;

use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;
const UBYTE: u8 = 0x08;

/// A parsed IDX file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

impl IdxArray {
    pub fn magic(&self) -> u32 {
        ((UBYTE as u32) << 8) | self.dims.len() as u32
    }
}

fn format_err(offset: usize, reason: impl Into<String>) -> Error {
    Error::Format {
        what: "IDX file",
        offset: offset as u64,
        reason: reason.into(),
    }
}

pub fn parse_idx(bytes: &[u8]) -> Result<IdxArray> {
    if bytes.len() < 4 {
        return Err(format_err(bytes.len(), "truncated magic number"));
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(format_err(0, "magic number must start with two zero bytes"));
    }
    if bytes[2] != UBYTE {
        return Err(format_err(
            2,
            format!("unsupported element type 0x{:02x}", bytes[2]),
        ));
    }
    let ndims = bytes[3] as usize;
    if ndims == 0 {
        return Err(format_err(3, "zero dimensions"));
    }
    let mut dims = Vec::with_capacity(ndims);
    for i in 0..ndims {
        let off = 4 + 4 * i;
        let Some(raw) = bytes.get(off..off + 4) else {
            return Err(format_err(bytes.len(), format!("truncated size of dimension {i}")));
        };
        dims.push(u32::from_be_bytes(raw.try_into().expect("4 bytes")) as usize);
    }
    let header = 4 + 4 * ndims;
    let expected = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| format_err(4, "dimension product overflows"))?;
    let payload = &bytes[header..];
    if payload.len() < expected {
        return Err(format_err(
            bytes.len(),
            format!("truncated payload: expected {expected} bytes after header, found {}", payload.len()),
        ));
    }
    if payload.len() > expected {
        return Err(format_err(
            header + expected,
            format!("{} trailing bytes", payload.len() - expected),
        ));
    }
    Ok(IdxArray {
        dims,
        data: payload.to_vec(),
    })
}

pub fn write_idx(array: &IdxArray) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 4 * array.dims.len() + array.data.len());
    out.extend_from_slice(&[0, 0, UBYTE, array.dims.len() as u8]);
    for &d in &array.dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(&array.data);
    out
}

pub fn read_idx_file(path: &Path) -> Result<IdxArray> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_idx(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_hand_written_bytes() {
        let bytes = [0, 0, 8, 2, 0, 0, 0, 2, 0, 0, 0, 3, 1, 2, 3, 4, 5, 255];
        let a = parse_idx(&bytes).unwrap();
        assert_eq!(a.dims, vec![2, 3]);
        assert_eq!(a.data, vec![1, 2, 3, 4, 5, 255]);
        assert_eq!(a.magic(), 0x0802);
    }

    #[test]
    fn truncated_payload_names_offset() {
        let bytes = [0, 0, 8, 1, 0, 0, 0, 5, 1, 2];
        match parse_idx(&bytes) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 10),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn truncated_header_and_bad_magic() {
        assert!(matches!(parse_idx(&[0, 0, 8]), Err(Error::Format { offset: 3, .. })));
        assert!(matches!(parse_idx(&[0, 0, 8, 1, 0, 0]), Err(Error::Format { offset: 6, .. })));
        assert!(matches!(parse_idx(&[1, 0, 8, 1]), Err(Error::Format { offset: 0, .. })));
        assert!(matches!(parse_idx(&[0, 0, 0x0d, 1]), Err(Error::Format { offset: 2, .. })));
    }

    #[test]
    fn trailing_bytes_rejected() {
        let bytes = [0, 0, 8, 1, 0, 0, 0, 1, 7, 9];
        assert!(matches!(parse_idx(&bytes), Err(Error::Format { offset: 9, .. })));
    }

    proptest! {
        #[test]
        fn write_then_parse_is_identity(dims in proptest::collection::vec(0usize..5, 1..4), seed in any::<u8>()) {
            let n: usize = dims.iter().product();
            let data: Vec<u8> = (0..n).map(|i| (i as u8).wrapping_mul(31).wrapping_add(seed)).collect();
            let a = IdxArray { dims, data };
            prop_assert_eq!(parse_idx(&write_idx(&a)).unwrap(), a);
        }
    }
}
