//! Named parameter storage and the binary checkpoint format.
//!
//! Checkpoint layout, all integers little-endian:
//!
//! ```text
//! magic     8 bytes  "TDMATCKP"
//! version   u32      currently 1
//! meta_len  u32      length of the metadata blob
//! meta      bytes    UTF-8 text (the resolved run configuration)
//! count     u32      number of tensors
//! repeated count times, in ascending name order:
//!   name_len u32, name bytes (UTF-8)
//!   rows u64, cols u64
//!   rows * cols f64 values, row-major
//! ```

use std::collections::BTreeMap;
use std::io::{Read, Write};

use super::{Tensor, TensorError};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"TDMATCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    tensors: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        self.tensors.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.tensors.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar entries.
    pub fn scalar_count(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    pub fn write_checkpoint(&self, meta: &str, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&(meta.len() as u32).to_le_bytes())?;
        w.write_all(meta.as_bytes())?;
        w.write_all(&(self.tensors.len() as u32).to_le_bytes())?;
        for (name, t) in &self.tensors {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&(t.rows() as u64).to_le_bytes())?;
            w.write_all(&(t.cols() as u64).to_le_bytes())?;
            for v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Reads a checkpoint, returning the parameters and the metadata text.
    pub fn read_checkpoint(mut r: impl Read) -> Result<(Self, String), TensorError> {
        let corrupt = |msg: &str| TensorError::Checkpoint(msg.to_string());
        let mut magic = [0u8; 8];
        read_exact(&mut r, &mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = read_u32(&mut r)?;
        if version != CHECKPOINT_VERSION {
            return Err(TensorError::Checkpoint(format!("unsupported version {version}")));
        }
        let meta_len = read_u32(&mut r)? as usize;
        let mut meta = vec![0u8; meta_len];
        read_exact(&mut r, &mut meta)?;
        let meta = String::from_utf8(meta).map_err(|_| corrupt("metadata is not UTF-8"))?;
        let count = read_u32(&mut r)?;
        let mut store = ParamStore::new();
        for _ in 0..count {
            let name_len = read_u32(&mut r)? as usize;
            let mut name = vec![0u8; name_len];
            read_exact(&mut r, &mut name)?;
            let name = String::from_utf8(name).map_err(|_| corrupt("name is not UTF-8"))?;
            let rows = read_u64(&mut r)? as usize;
            let cols = read_u64(&mut r)? as usize;
            let n = rows.checked_mul(cols).filter(|&n| n <= 1 << 28).ok_or_else(|| corrupt("shape too large"))?;
            let mut bytes = vec![0u8; n * 8];
            read_exact(&mut r, &mut bytes)?;
            let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            store.insert(name, Tensor::new(rows, cols, data)?);
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest).map_err(|e| TensorError::Checkpoint(e.to_string()))? != 0 {
            return Err(corrupt("trailing bytes"));
        }
        Ok((store, meta))
    }
}

fn read_exact(r: &mut impl Read, buf: &mut [u8]) -> Result<(), TensorError> {
    r.read_exact(buf).map_err(|e| TensorError::Checkpoint(format!("truncated: {e}")))
}

fn read_u32(r: &mut impl Read) -> Result<u32, TensorError> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64, TensorError> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> ParamStore {
        let mut p = ParamStore::new();
        p.insert("b", Tensor::row(&[1.5, -2.0]));
        p.insert("a.w", Tensor::new(2, 3, vec![0.1, 0.2, 0.3, -1e-300, 7.0, f64::MIN_POSITIVE]).unwrap());
        p
    }

    #[test]
    fn checkpoint_round_trip() {
        let p = store();
        let mut buf = Vec::new();
        p.write_checkpoint("embed_dim = 16\n", &mut buf).unwrap();
        let (q, meta) = ParamStore::read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(p, q);
        assert_eq!(meta, "embed_dim = 16\n");
    }

    #[test]
    fn checkpoint_layout_is_documented_bytes() {
        let mut p = ParamStore::new();
        p.insert("x", Tensor::scalar(1.0));
        let mut buf = Vec::new();
        p.write_checkpoint("", &mut buf).unwrap();
        let mut want = b"TDMATCKP".to_vec();
        want.extend(1u32.to_le_bytes());
        want.extend(0u32.to_le_bytes());
        want.extend(1u32.to_le_bytes());
        want.extend(1u32.to_le_bytes());
        want.push(b'x');
        want.extend(1u64.to_le_bytes());
        want.extend(1u64.to_le_bytes());
        want.extend(1.0f64.to_le_bytes());
        assert_eq!(buf, want);
    }

    #[test]
    fn corrupt_checkpoints_are_rejected() {
        let mut buf = Vec::new();
        store().write_checkpoint("m", &mut buf).unwrap();
        assert!(ParamStore::read_checkpoint(&buf[..buf.len() - 3]).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(ParamStore::read_checkpoint(bad.as_slice()).is_err());
        let mut ver = buf.clone();
        ver[8] = 9;
        assert!(ParamStore::read_checkpoint(ver.as_slice()).is_err());
        let mut extra = buf;
        extra.push(0);
        assert!(ParamStore::read_checkpoint(extra.as_slice()).is_err());
    }
}
