//! Precomputed image feature vectors.
//!
//! Binary layout, all integers little-endian:
//!
//! ```text
//! "IMFT" | version u32 = 1 | count u32 | dim u32
//! count × ( id_len u16 | id UTF-8 | dim × f32 )
//! ```

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

pub const FEATURE_MAGIC: &[u8; 4] = b"IMFT";
pub const FEATURE_VERSION: u32 = 1;

/// Image id → feature vector, in insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    dim: usize,
    ids: Vec<String>,
    values: Vec<f32>,
    index: HashMap<String, usize>,
}

impl FeatureTable {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Invalid("feature dimension must be positive".into()));
        }
        Ok(FeatureTable {
            dim,
            ids: Vec::new(),
            values: Vec::new(),
            index: HashMap::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn insert(&mut self, id: impl Into<String>, vector: Vec<f32>) -> Result<()> {
        let id = id.into();
        if vector.len() != self.dim {
            return Err(Error::Invalid(format!(
                "feature `{id}` has length {}, table dim is {}",
                vector.len(),
                self.dim
            )));
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("feature `{id}` has non-finite values")));
        }
        if id.len() > u16::MAX as usize {
            return Err(Error::Invalid("feature id longer than 65535 bytes".into()));
        }
        if self.index.contains_key(&id) {
            return Err(Error::Invalid(format!("duplicate feature id `{id}`")));
        }
        self.index.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.values.extend(vector);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.index.get(id).map(|&i| &self.values[i * self.dim..(i + 1) * self.dim])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.ids.iter().map(String::as_str).zip(self.values.chunks(self.dim))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.values.len() * 4 + self.ids.len() * 8);
        out.extend_from_slice(FEATURE_MAGIC);
        out.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.ids.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for (id, v) in self.iter() {
            out.extend_from_slice(&(id.len() as u16).to_le_bytes());
            out.extend_from_slice(id.as_bytes());
            for x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    /// Parses the binary layout. `path` only labels diagnostics.
    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0, path };
        if r.take(4)? != FEATURE_MAGIC {
            return Err(Error::format(path, "offset 0", "bad magic, expected IMFT"));
        }
        let version = r.u32()?;
        if version != FEATURE_VERSION {
            return Err(Error::format(path, "offset 4", format!("unsupported version {version}")));
        }
        let count = r.u32()? as usize;
        let dim = r.u32()? as usize;
        if dim == 0 {
            return Err(Error::format(path, "offset 12", "dim is zero"));
        }
        let mut table = FeatureTable::new(dim)?;
        for _ in 0..count {
            let start = r.pos;
            let id_len = r.u16()? as usize;
            let id = std::str::from_utf8(r.take(id_len)?)
                .map_err(|_| Error::format(path, format!("offset {start}"), "id is not UTF-8"))?
                .to_owned();
            let raw = r.take(dim * 4)?;
            let vector = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            table
                .insert(id, vector)
                .map_err(|e| Error::format(path, format!("offset {start}"), e.to_string()))?;
        }
        if r.pos != bytes.len() {
            return Err(Error::format(
                path,
                format!("offset {}", r.pos),
                format!("{} trailing bytes after {count} records", bytes.len() - r.pos),
            ));
        }
        Ok(table)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::format(
                self.path,
                format!("offset {}", self.pos),
                format!("truncated: need {n} bytes, {} left", self.bytes.len() - self.pos),
            ));
        }
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn read_feature_file(path: impl AsRef<Path>) -> Result<FeatureTable> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    FeatureTable::from_bytes(&bytes, path)
}

pub fn write_feature_file(table: &FeatureTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, table.to_bytes()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> FeatureTable {
        let mut t = FeatureTable::new(3).unwrap();
        t.insert("img-a", vec![0.5, -1.25, 3.0]).unwrap();
        t.insert("b", vec![f32::MIN_POSITIVE, -0.0, 1e30]).unwrap();
        t
    }

    #[test]
    fn exact_layout() {
        let mut t = FeatureTable::new(1).unwrap();
        t.insert("x", vec![1.0]).unwrap();
        let bytes = t.to_bytes();
        let want: Vec<u8> = [
            &b"IMFT"[..],
            &[1, 0, 0, 0],
            &[1, 0, 0, 0],
            &[1, 0, 0, 0],
            &[1, 0],
            b"x",
            &1.0f32.to_le_bytes(),
        ]
        .concat();
        assert_eq!(bytes, want);
    }

    #[test]
    fn empty_table_is_header_only() {
        let t = FeatureTable::new(2048).unwrap();
        let bytes = t.to_bytes();
        assert_eq!(bytes.len(), 16);
        assert_eq!(FeatureTable::from_bytes(&bytes, Path::new("f")).unwrap(), t);
    }

    #[test]
    fn truncation_reports_offset() {
        let bytes = sample().to_bytes();
        let cut = &bytes[..bytes.len() - 5];
        let err = FeatureTable::from_bytes(cut, Path::new("f.imft")).unwrap_err().to_string();
        assert!(err.contains("offset") && err.contains("truncated"), "{err}");
    }

    #[test]
    fn rejects_bad_magic_trailing_bytes_and_duplicates() {
        let mut bytes = sample().to_bytes();
        bytes[0] = b'X';
        assert!(FeatureTable::from_bytes(&bytes, Path::new("f")).unwrap_err().to_string().contains("magic"));

        let mut bytes = sample().to_bytes();
        bytes.push(0);
        assert!(FeatureTable::from_bytes(&bytes, Path::new("f")).unwrap_err().to_string().contains("trailing"));

        let mut t = FeatureTable::new(1).unwrap();
        t.insert("a", vec![1.0]).unwrap();
        assert!(t.insert("a", vec![2.0]).is_err());
        // duplicate smuggled into a file
        let mut bytes = t.to_bytes();
        bytes[8] = 2;
        bytes.extend_from_slice(&[1, 0, b'a']);
        bytes.extend_from_slice(&2.0f32.to_le_bytes());
        assert!(FeatureTable::from_bytes(&bytes, Path::new("f")).unwrap_err().to_string().contains("duplicate"));
    }

    #[test]
    fn rejects_wrong_length_and_non_finite() {
        let mut t = FeatureTable::new(2).unwrap();
        assert!(t.insert("a", vec![1.0]).is_err());
        assert!(t.insert("a", vec![1.0, f32::NAN]).is_err());
    }
}
