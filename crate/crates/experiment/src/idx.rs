//! The IDX binary format used by the MNIST distribution.
//!
//! Layout: magic `00 00 <type> <rank>`, then `rank` big-endian `u32`
//! dimension sizes, then the payload in row-major order. Only unsigned byte
//! payloads (type `0x08`) are supported.

use std::path::Path;

use thiserror::Error;

const UBYTE: u8 = 0x08;

#[derive(Debug, Error)]
pub enum IdxError {
    #[error("not an IDX file: {0}")]
    Format(String),
    #[error("IDX payload length mismatch: expected {expected} bytes, found {actual}")]
    Length { expected: usize, actual: usize },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxTensor {
    pub dims: Vec<u32>,
    pub data: Vec<u8>,
}

impl IdxTensor {
    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    /// Size of one entry along the first axis.
    pub fn item_len(&self) -> usize {
        self.dims.iter().skip(1).map(|d| *d as usize).product()
    }

    pub fn len(&self) -> usize {
        self.dims.first().copied().unwrap_or(0) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Entry `i` scaled from `0..=255` to `[0, 1]`.
    pub fn item_scaled(&self, i: usize) -> Vec<f64> {
        let n = self.item_len();
        self.data[i * n..(i + 1) * n].iter().map(|b| *b as f64 / 255.0).collect()
    }
}

pub fn parse_idx(bytes: &[u8]) -> Result<IdxTensor, IdxError> {
    if bytes.len() < 4 {
        return Err(IdxError::Format(format!("{} bytes is too short for a header", bytes.len())));
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(IdxError::Format(format!(
            "magic must start with 00 00, found {:02x} {:02x}",
            bytes[0], bytes[1]
        )));
    }
    if bytes[2] != UBYTE {
        return Err(IdxError::Format(format!("unsupported element type 0x{:02x}", bytes[2])));
    }
    let rank = bytes[3] as usize;
    if rank == 0 {
        return Err(IdxError::Format("rank 0".into()));
    }
    let header = 4 + 4 * rank;
    if bytes.len() < header {
        return Err(IdxError::Length {
            expected: header,
            actual: bytes.len(),
        });
    }
    let dims: Vec<u32> = bytes[4..header]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes(c.try_into().expect("4 bytes")))
        .collect();
    let payload = dims
        .iter()
        .try_fold(1usize, |acc, d| acc.checked_mul(*d as usize))
        .ok_or_else(|| IdxError::Format("dimension product overflows".into()))?;
    let actual = bytes.len() - header;
    if actual != payload {
        return Err(IdxError::Length {
            expected: payload,
            actual,
        });
    }
    Ok(IdxTensor {
        dims,
        data: bytes[header..].to_vec(),
    })
}

pub fn serialize_idx(t: &IdxTensor) -> Vec<u8> {
    let mut out = vec![0, 0, UBYTE, t.dims.len() as u8];
    for d in &t.dims {
        out.extend_from_slice(&d.to_be_bytes());
    }
    out.extend_from_slice(&t.data);
    out
}

pub fn read_idx(path: &Path) -> Result<IdxTensor, IdxError> {
    let bytes = std::fs::read(path).map_err(|source| IdxError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_idx(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn image_and_label_headers() {
        // 2 images of 2x3, then 2 labels
        let mut images = vec![0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 3];
        images.extend(0..12u8);
        let t = parse_idx(&images).unwrap();
        assert_eq!(u32::from_be_bytes(images[..4].try_into().unwrap()), 2051);
        assert_eq!(t.rank(), 3);
        assert_eq!(t.dims, vec![2, 2, 3]);
        assert_eq!(t.item_len(), 6);
        assert_eq!(t.item_scaled(1)[0], 6.0 / 255.0);

        let labels = [0, 0, 8, 1, 0, 0, 0, 2, 7, 1];
        assert_eq!(u32::from_be_bytes(labels[..4].try_into().unwrap()), 2049);
        let l = parse_idx(&labels).unwrap();
        assert_eq!(l.rank(), 1);
        assert_eq!(l.data, vec![7, 1]);
    }

    #[test]
    fn errors() {
        assert!(matches!(parse_idx(&[0, 1, 8, 1, 0, 0, 0, 0]), Err(IdxError::Format(_))));
        assert!(matches!(parse_idx(&[0, 0, 0x0d, 1, 0, 0, 0, 0]), Err(IdxError::Format(_))));
        assert!(matches!(parse_idx(&[0, 0]), Err(IdxError::Format(_))));
        let err = parse_idx(&[0, 0, 8, 1, 0, 0, 0, 5, 1, 2]).unwrap_err();
        assert!(matches!(err, IdxError::Length { expected: 5, actual: 2 }));
        assert_eq!(err.to_string(), "IDX payload length mismatch: expected 5 bytes, found 2");
        assert!(matches!(
            parse_idx(&[0, 0, 8, 2, 0, 0, 0, 5]),
            Err(IdxError::Length { expected: 12, actual: 8 })
        ));
    }

    proptest! {
        #[test]
        fn roundtrip(dims in proptest::collection::vec(1u32..5, 1..4), seed in any::<u8>()) {
            let n: u32 = dims.iter().product();
            let data = (0..n).map(|i| (i as u8).wrapping_mul(31).wrapping_add(seed)).collect();
            let t = IdxTensor { dims, data };
            prop_assert_eq!(parse_idx(&serialize_idx(&t)).unwrap(), t);
        }
    }
}
