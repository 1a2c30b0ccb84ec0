//! Binary tensor container shared by model weight and perturbation files.
//!
//! ```text
//! magic        8 bytes     e.g. "AMGAZOO1", "AMGADLT1"
//! version      u32 LE
//! header_len   u32 LE
//! header       header_len bytes of UTF-8 JSON
//! count        u32 LE      number of tensors
//! per tensor:  rank u32 LE, dims u32 LE × rank, payload f32 LE × Π dims
//! crc32        u32 LE      over every preceding byte
//! ```

use std::path::Path;

use crate::error::{Error, FormatError, Result};
use crate::numerics::Tensor;

pub const FORMAT_VERSION: u32 = 1;
pub const ZOO_MAGIC: &[u8; 8] = b"AMGAZOO1";
pub const PERTURBATION_MAGIC: &[u8; 8] = b"AMGADLT1";

pub fn encode(magic: &[u8; 8], header: &str, tensors: &[Tensor]) -> Vec<u8> {
    let payload: usize = tensors.iter().map(|t| 4 + 4 * t.shape().len() + 4 * t.len()).sum();
    let mut out = Vec::with_capacity(24 + header.len() + payload);
    out.extend_from_slice(magic);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], FormatError> {
        if self.buf.len() - self.pos < n {
            return Err(FormatError::TruncatedPayload { what });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

/// Decodes a container, returning the JSON header and tensors.
///
/// Structural errors (magic, version, truncation) are reported before the
/// checksum so a cut-off file reads as truncated rather than corrupt.
pub fn decode(magic: &[u8; 8], bytes: &[u8]) -> Result<(String, Vec<Tensor>), FormatError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let found = r.take(8, "magic")?;
    if found != magic {
        return Err(FormatError::BadMagic {
            expected: String::from_utf8_lossy(magic).into_owned(),
            found: String::from_utf8_lossy(found).into_owned(),
        });
    }
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(FormatError::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let hlen = r.u32("header length")? as usize;
    let header = std::str::from_utf8(r.take(hlen, "header")?)
        .map_err(|e| FormatError::Header(e.to_string()))?
        .to_owned();
    let count = r.u32("tensor count")? as usize;
    let mut tensors = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let rank = r.u32("tensor rank")? as usize;
        let mut dims = Vec::with_capacity(rank.min(16));
        for _ in 0..rank {
            dims.push(r.u32("tensor dims")? as usize);
        }
        let n: usize = dims.iter().product();
        let raw = r.take(n.checked_mul(4).ok_or(FormatError::TruncatedPayload { what: "tensor payload" })?, "tensor payload")?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push(Tensor::new(dims, data).map_err(|e| FormatError::Header(e.to_string()))?);
    }
    let body_end = r.pos;
    let stored = r.u32("checksum")?;
    let computed = crc32fast::hash(&bytes[..body_end]);
    if stored != computed {
        return Err(FormatError::Checksum { stored, computed });
    }
    if r.pos != bytes.len() {
        return Err(FormatError::Header(format!(
            "{} trailing bytes after checksum",
            bytes.len() - r.pos
        )));
    }
    Ok((header, tensors))
}

pub fn write_file(path: &Path, magic: &[u8; 8], header: &str, tensors: &[Tensor]) -> Result<()> {
    std::fs::write(path, encode(magic, header, tensors)).map_err(|e| Error::io(path, e))
}

pub fn read_file(path: &Path, magic: &[u8; 8]) -> Result<(String, Vec<Tensor>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(magic, &bytes).map_err(|source| Error::Format {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> Vec<Tensor> {
        vec![
            Tensor::new(vec![2, 2], vec![1.0, -0.5, f32::MIN_POSITIVE, 3.25]).unwrap(),
            Tensor::new(vec![3], vec![0.1, 0.2, 0.3]).unwrap(),
        ]
    }

    #[test]
    fn bad_magic() {
        let mut bytes = encode(ZOO_MAGIC, "{}", &sample());
        bytes[0] = b'X';
        assert!(matches!(decode(ZOO_MAGIC, &bytes), Err(FormatError::BadMagic { .. })));
        let other = encode(PERTURBATION_MAGIC, "{}", &sample());
        assert!(matches!(decode(ZOO_MAGIC, &other), Err(FormatError::BadMagic { .. })));
    }

    #[test]
    fn version_mismatch() {
        let mut bytes = encode(ZOO_MAGIC, "{}", &sample());
        bytes[8] = 9;
        assert!(matches!(
            decode(ZOO_MAGIC, &bytes),
            Err(FormatError::VersionMismatch { found: 9, .. })
        ));
    }

    #[test]
    fn truncated_mid_tensor() {
        let bytes = encode(ZOO_MAGIC, "{}", &sample());
        let cut = &bytes[..bytes.len() - 10];
        let err = decode(ZOO_MAGIC, cut).unwrap_err();
        assert!(matches!(err, FormatError::TruncatedPayload { .. }));
        assert!(err.to_string().contains("truncated payload"));
    }

    #[test]
    fn flipped_payload_bit_fails_checksum() {
        let mut bytes = encode(ZOO_MAGIC, "{}", &sample());
        let n = bytes.len();
        bytes[n - 8] ^= 1;
        assert!(matches!(decode(ZOO_MAGIC, &bytes), Err(FormatError::Checksum { .. })));
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(values in proptest::collection::vec(any::<f32>(), 1..64), header in "[a-z{}\":0-9]{0,40}") {
            let t = Tensor::new(vec![values.len()], values).unwrap();
            let bytes = encode(PERTURBATION_MAGIC, &header, std::slice::from_ref(&t));
            let (h, back) = decode(PERTURBATION_MAGIC, &bytes).unwrap();
            prop_assert_eq!(h, header);
            let a: Vec<u32> = t.data().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u32> = back[0].data().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
        }
    }
}
