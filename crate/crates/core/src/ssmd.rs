//! `SSMD` model container: named tensors of little-endian `f64`.
//!
//! ```text
//! "SSMD" | version: u32 | count: u32 | count × record
//! record = name_len: u32 | name: utf-8 | rank: u32 | rank × dim: u64 | Π dims × f64
//! ```
//! All integers are little-endian.

use std::path::Path;

use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"SSMD";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum SsmdError {
    #[error("not an SSMD file (bad magic)")]
    BadMagic,
    #[error("unsupported SSMD version {0}")]
    UnsupportedVersion(u32),
    #[error("SSMD file truncated")]
    Truncated,
    #[error("SSMD record name is not UTF-8")]
    BadName,
    #[error("SSMD record `{0}` has an invalid shape")]
    BadShape(String),
    #[error("duplicate SSMD record `{0}`")]
    DuplicateRecord(String),
    #[error("{0} trailing bytes after last SSMD record")]
    TrailingBytes(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Ordered list of uniquely named tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModelFile {
    records: Vec<(String, Tensor)>,
}

impl ModelFile {
    /// Appends a record; replaces an existing record of the same name.
    pub fn push(&mut self, name: &str, tensor: Tensor) {
        if let Some(slot) = self.records.iter_mut().find(|(n, _)| n == name) {
            slot.1 = tensor;
        } else {
            self.records.push((name.to_string(), tensor));
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.records.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn records(&self) -> &[(String, Tensor)] {
        &self.records
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.records.len() as u32).to_le_bytes());
        for (name, t) in &self.records {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, SsmdError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(SsmdError::BadMagic);
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(SsmdError::UnsupportedVersion(version));
        }
        let count = r.u32()?;
        let mut file = ModelFile::default();
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| SsmdError::BadName)?
                .to_string();
            let rank = r.u32()? as usize;
            let mut shape = Vec::with_capacity(rank.min(16));
            for _ in 0..rank {
                shape.push(usize::try_from(r.u64()?).map_err(|_| SsmdError::BadShape(name.clone()))?);
            }
            let n = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| SsmdError::BadShape(name.clone()))?;
            let raw = r.take(n.checked_mul(8).ok_or(SsmdError::Truncated)?)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            let tensor = Tensor::new(shape, data).map_err(|_| SsmdError::BadShape(name.clone()))?;
            if file.get(&name).is_some() {
                return Err(SsmdError::DuplicateRecord(name));
            }
            file.records.push((name, tensor));
        }
        if r.pos != bytes.len() {
            return Err(SsmdError::TrailingBytes(bytes.len() - r.pos));
        }
        Ok(file)
    }

    pub fn write(&self, path: &Path) -> Result<(), SsmdError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, SsmdError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], SsmdError> {
        let end = self.pos.checked_add(n).ok_or(SsmdError::Truncated)?;
        let slice = self.bytes.get(self.pos..end).ok_or(SsmdError::Truncated)?;
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32, SsmdError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, SsmdError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn layout_is_little_endian_with_header() {
        let mut f = ModelFile::default();
        f.push("w", Tensor::vector(vec![1.0]));
        let b = f.to_bytes();
        assert_eq!(&b[..4], b"SSMD");
        assert_eq!(&b[4..8], &[1, 0, 0, 0]);
        assert_eq!(&b[8..12], &[1, 0, 0, 0]);
        assert_eq!(&b[12..16], &[1, 0, 0, 0]);
        assert_eq!(&b[16..17], b"w");
        assert_eq!(&b[17..21], &[1, 0, 0, 0]);
        assert_eq!(&b[21..29], &1u64.to_le_bytes());
        assert_eq!(&b[29..37], &1.0f64.to_le_bytes());
        assert_eq!(b.len(), 37);
    }

    #[test]
    fn rejects_damaged_input() {
        let mut f = ModelFile::default();
        f.push("x", Tensor::vector(vec![2.0, 3.0]));
        let b = f.to_bytes();
        assert!(matches!(
            ModelFile::from_bytes(&b[..b.len() - 1]),
            Err(SsmdError::Truncated)
        ));
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(matches!(ModelFile::from_bytes(&bad), Err(SsmdError::BadMagic)));
        let mut bad = b.clone();
        bad[4] = 9;
        assert!(matches!(
            ModelFile::from_bytes(&bad),
            Err(SsmdError::UnsupportedVersion(9))
        ));
        let mut long = b;
        long.push(0);
        assert!(matches!(ModelFile::from_bytes(&long), Err(SsmdError::TrailingBytes(1))));
    }

    proptest! {
        #[test]
        fn round_trip_preserves_bits(
            values in prop::collection::vec(prop::num::f64::ANY, 1..40),
            name in "[a-z.]{1,12}",
        ) {
            let mut f = ModelFile::default();
            f.push(&name, Tensor::vector(values.clone()));
            let back = ModelFile::from_bytes(&f.to_bytes()).unwrap();
            let got = back.get(&name).unwrap().data();
            prop_assert_eq!(got.len(), values.len());
            for (a, b) in got.iter().zip(&values) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
