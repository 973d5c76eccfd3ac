//! Named-tensor archives, the on-disk layout shared by datasets and
//! checkpoints.
//!
//! All integers and floats are little-endian:
//!
//! ```text
//! magic    4 bytes  "PSNT"
//! version  u32      1
//! count    u32      number of entries
//! entry*   count times:
//!   name_len u32, name (UTF-8, name_len bytes)
//!   ndim     u32, dims (ndim x u64)
//!   data     prod(dims) x f64 (IEEE-754 binary64, row-major)
//! ```
//!
//! A scalar is stored with `ndim = 0` and one value.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::engine::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"PSNT";
pub const VERSION: u32 = 1;

pub fn encode(entries: &[(&str, &Tensor)]) -> Vec<u8> {
    let total: usize = entries.iter().map(|(n, t)| 16 + n.len() + 8 * (t.ndim() + t.numel())).sum();
    let mut out = Vec::with_capacity(12 + total);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for (name, t) in entries {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.ndim() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn write_archive(path: &Path, entries: &[(&str, &Tensor)]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&encode(entries))?;
    w.flush()?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.bad("truncated archive"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn bad(&self, message: &str) -> Error {
        Error::Format {
            path: self.path.to_path_buf(),
            message: format!("{message} at byte {}", self.pos),
        }
    }
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<Vec<(String, Tensor)>> {
    let mut c = Cursor { bytes, pos: 0, path };
    if c.take(4)? != MAGIC {
        return Err(c.bad("bad magic"));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(c.bad(&format!("unsupported version {version}")));
    }
    let count = c.u32()? as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let len = c.u32()? as usize;
        let name = std::str::from_utf8(c.take(len)?)
            .map_err(|_| c.bad("entry name is not UTF-8"))?
            .to_string();
        let ndim = c.u32()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(c.u64()? as usize);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|n| n.checked_mul(8).is_some_and(|b| b <= bytes.len()))
            .ok_or_else(|| c.bad("implausible tensor size"))?;
        let raw = c.take(8 * n)?;
        let data = raw
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        let t = Tensor::new(shape, data).map_err(|e| c.bad(&e.to_string()))?;
        out.push((name, t));
    }
    if c.pos != bytes.len() {
        return Err(c.bad("trailing bytes"));
    }
    Ok(out)
}

pub fn read_archive(path: &Path) -> Result<Vec<(String, Tensor)>> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    decode(&bytes, path)
}

/// Looks up an entry by name.
pub fn take(entries: &mut Vec<(String, Tensor)>, name: &str, path: &Path) -> Result<Tensor> {
    let i = entries
        .iter()
        .position(|(n, _)| n == name)
        .ok_or_else(|| Error::Format {
            path: path.to_path_buf(),
            message: format!("missing entry `{name}`"),
        })?;
    Ok(entries.swap_remove(i).1)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn archives_round_trip(
            dims in prop::collection::vec(1usize..4, 0..4),
            seed in any::<u64>(),
            name in "[a-z_.]{1,12}",
        ) {
            let n: usize = dims.iter().product();
            let t = Tensor::new(dims.clone(), (0..n).map(|i| (i as f64 + seed as f64).sin() * 1e3).collect()).unwrap();
            let bytes = encode(&[(name.as_str(), &t), ("other", &Tensor::scalar(-0.0))]);
            let back = decode(&bytes, Path::new("mem")).unwrap();
            prop_assert_eq!(&back[0].0, &name);
            prop_assert_eq!(&back[0].1, &t);
            prop_assert_eq!(back[1].1.item().to_bits(), (-0.0f64).to_bits());
        }
    }

    #[test]
    fn header_layout_is_fixed() {
        let t = Tensor::new(vec![2], vec![1.0, -2.0]).unwrap();
        let bytes = encode(&[("ab", &t)]);
        let mut expected = b"PSNT".to_vec();
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.extend_from_slice(&2u32.to_le_bytes());
        expected.extend_from_slice(b"ab");
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.extend_from_slice(&2u64.to_le_bytes());
        expected.extend_from_slice(&1.0f64.to_le_bytes());
        expected.extend_from_slice(&(-2.0f64).to_le_bytes());
        assert_eq!(bytes, expected);
    }

    #[test]
    fn corrupt_archives_are_rejected() {
        let t = Tensor::zeros(&[3]);
        let bytes = encode(&[("x", &t)]);
        let p = Path::new("mem");
        assert!(decode(&bytes[..bytes.len() - 1], p).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode(&bad, p).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(decode(&extra, p).is_err());
    }
}
