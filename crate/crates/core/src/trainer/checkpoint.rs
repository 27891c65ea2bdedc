//! Checkpointing: a small named-tensor binary container plus a JSON
//! manifest carrying the config hash, progress counters and seed, enabling
//! exact resume (RNG streams are derived statelessly, so no generator state
//! needs saving; image pools do).

use std::io::{Read, Write};
use std::path::Path;

use ndarray::ArrayD;
use serde::{Deserialize, Serialize};

use crate::autodiff::Scalar;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"MVTS";
const VERSION: u32 = 1;

pub fn write_tensors<T: Scalar>(path: &Path, items: &[(String, ArrayD<T>)]) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(items.len() as u32).to_le_bytes());
    for (name, tensor) in items {
        let name_bytes = name.as_bytes();
        buf.extend_from_slice(&(name_bytes.len() as u16).to_le_bytes());
        buf.extend_from_slice(name_bytes);
        buf.push(T::DTYPE.tag());
        buf.push(tensor.ndim() as u8);
        for d in tensor.shape() {
            buf.extend_from_slice(&(*d as u32).to_le_bytes());
        }
        let standard = tensor.as_standard_layout();
        for v in standard.iter() {
            v.write_le(&mut buf);
        }
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn read_tensors<T: Scalar>(path: &Path) -> Result<Vec<(String, ArrayD<T>)>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let fail = |msg: &str| Error::Checkpoint(format!("{}: {msg}", path.display()));
    let mut off = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        if off + n > bytes.len() {
            return Err(fail("truncated tensor file"));
        }
        let s = &bytes[off..off + n];
        off += n;
        Ok(s)
    };
    if take(4)? != MAGIC {
        return Err(fail("bad magic"));
    }
    let version = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(fail(&format!("unsupported version {version}")));
    }
    let count = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes")) as usize;
    let mut items = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = u16::from_le_bytes(take(2)?.try_into().expect("2 bytes")) as usize;
        let name = String::from_utf8(take(name_len)?.to_vec())
            .map_err(|_| fail("tensor name is not utf-8"))?;
        let dtype = take(1)?[0];
        if dtype != T::DTYPE.tag() {
            return Err(fail(&format!(
                "tensor {name} stored with dtype tag {dtype}, expected {}",
                T::DTYPE.tag()
            )));
        }
        let ndim = take(1)?[0] as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(u32::from_le_bytes(take(4)?.try_into().expect("4 bytes")) as usize);
        }
        let n: usize = shape.iter().product();
        let raw = take(n * T::BYTES)?;
        let data: Vec<T> = raw.chunks_exact(T::BYTES).map(T::read_le).collect();
        items.push((
            name,
            ArrayD::from_shape_vec(shape, data).map_err(|_| fail("shape/data mismatch"))?,
        ));
    }
    Ok(items)
}

/// Checkpoint directory metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub config_hash: String,
    pub epoch: usize,
    pub step: usize,
    pub seed: u64,
    pub dtype: String,
    pub nets: Vec<String>,
}

impl CheckpointManifest {
    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(&path, e))?;
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(&path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::fdcheck::seeded_values;

    #[test]
    fn tensor_store_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.bin");
        let items = vec![
            ("a.weight".to_string(), seeded_values(&[2, 3, 4], 5)),
            ("b".to_string(), seeded_values(&[7], 6)),
            ("scalar".to_string(), ndarray::arr0(42.0).into_dyn()),
        ];
        write_tensors(&path, &items).unwrap();
        let back = read_tensors::<f64>(&path).unwrap();
        assert_eq!(items.len(), back.len());
        for ((n0, t0), (n1, t1)) in items.iter().zip(&back) {
            assert_eq!(n0, n1);
            assert_eq!(t0, t1);
        }
        // dtype mismatch is rejected
        assert!(read_tensors::<f32>(&path).is_err());
    }
}
