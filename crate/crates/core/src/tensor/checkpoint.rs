//! Checkpoint files: named f64 tensors plus a small string metadata map.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic   b"SNIA"
//! version u32 (= 1)
//! n_meta  u32, then n_meta x (key: str, value: str)
//! n_tensors u32, then per tensor: name: str, rows: u64, cols: u64,
//!                                 rows*cols f64 values
//! ```
//!
//! where `str` is a u32 byte length followed by UTF-8 bytes.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::matrix::Matrix;
use crate::error::{Result, SniaError};

const MAGIC: &[u8; 4] = b"SNIA";
const VERSION: u32 = 1;

#[derive(Clone, Debug, Default)]
pub struct Checkpoint {
    /// Sorted map so serialization order is deterministic.
    pub meta: BTreeMap<String, String>,
    pub tensors: Vec<(String, Matrix)>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn tensor(&self, name: &str) -> Option<&Matrix> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                std::fs::create_dir_all(dir)?;
            }
        }
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.meta.len() as u32).to_le_bytes())?;
        for (k, v) in &self.meta {
            write_str(&mut w, k)?;
            write_str(&mut w, v)?;
        }
        w.write_all(&(self.tensors.len() as u32).to_le_bytes())?;
        for (name, m) in &self.tensors {
            write_str(&mut w, name)?;
            w.write_all(&(m.rows() as u64).to_le_bytes())?;
            w.write_all(&(m.cols() as u64).to_le_bytes())?;
            for v in m.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let path_str = || path.display().to_string();
        if !path.exists() {
            return Err(SniaError::MissingCheckpoint { path: path_str() });
        }
        let bad = |msg: &str| SniaError::BadCheckpoint {
            path: path_str(),
            msg: msg.to_string(),
        };
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(bad("wrong magic bytes"));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let n_meta = read_u32(&mut r)? as usize;
        let mut meta = BTreeMap::new();
        for _ in 0..n_meta {
            let k = read_str(&mut r)?;
            let v = read_str(&mut r)?;
            meta.insert(k, v);
        }
        let n_tensors = read_u32(&mut r)? as usize;
        let mut tensors = Vec::with_capacity(n_tensors);
        for _ in 0..n_tensors {
            let name = read_str(&mut r)?;
            let rows = read_u64(&mut r)? as usize;
            let cols = read_u64(&mut r)? as usize;
            let mut data = vec![0f64; rows * cols];
            let mut buf = [0u8; 8];
            for v in data.iter_mut() {
                r.read_exact(&mut buf)?;
                *v = f64::from_le_bytes(buf);
            }
            tensors.push((name, Matrix::from_vec(rows, cols, data)));
        }
        Ok(Checkpoint { meta, tensors })
    }
}

fn write_str(w: &mut impl Write, s: &str) -> Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_str(r: &mut impl Read) -> Result<String> {
    let len = read_u32(r)? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| SniaError::Validation(format!("non-UTF8 string in checkpoint: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_everything() {
        let dir = std::env::temp_dir().join("snia-ckpt-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("t.ckpt");
        let mut ck = Checkpoint::new();
        ck.meta.insert("arch".into(), "gcn".into());
        ck.meta.insert("seed".into(), "7".into());
        ck.tensors.push(("w1".into(), Matrix::from_vec(2, 3, vec![1.0, -2.0, 3.5, 0.0, 1e-300, -7.25])));
        ck.tensors.push(("w2".into(), Matrix::zeros(1, 1)));
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back.meta, ck.meta);
        assert_eq!(back.tensors.len(), 2);
        assert_eq!(back.tensor("w1"), ck.tensor("w1"));
        std::fs::remove_file(&path).unwrap();
    }

    #[test]
    fn missing_file_is_reported_with_path() {
        let err = Checkpoint::load(Path::new("/nonexistent/never.ckpt")).unwrap_err();
        assert!(matches!(err, SniaError::MissingCheckpoint { .. }));
        assert!(err.to_string().contains("never.ckpt"));
    }
}
