//! Single-file tensor archive with a versioned text header.
//!
//! Layout: `<header>\n`, a little-endian `u64` index length, the JSON index
//! (`{"meta": .., "tensors": [{"name","shape","dtype","offset","len"}]}`),
//! then the concatenated little-endian tensor payloads.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Debug, Serialize, Deserialize)]
struct EntryIndex {
    name: String,
    shape: Vec<usize>,
    dtype: String,
    offset: usize,
    len: usize,
}

#[derive(Serialize, Deserialize)]
struct Index {
    meta: serde_json::Value,
    tensors: Vec<EntryIndex>,
}

#[derive(Clone, Debug)]
struct Entry {
    name: String,
    shape: Vec<usize>,
    dtype: &'static str,
    /// Values widened to f64; exact for both supported dtypes.
    values: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Archive {
    header: String,
    pub meta: serde_json::Value,
    entries: Vec<Entry>,
}

impl Archive {
    pub fn new(header: impl Into<String>) -> Self {
        Self {
            header: header.into(),
            meta: serde_json::Value::Null,
            entries: Vec::new(),
        }
    }

    pub fn header(&self) -> &str {
        &self.header
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.name.as_str())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.iter().any(|e| e.name == name)
    }

    pub fn put<T: Scalar>(&mut self, name: impl Into<String>, t: &Tensor<T>) {
        let name = name.into();
        self.entries.retain(|e| e.name != name);
        self.entries.push(Entry {
            name,
            shape: t.shape().to_vec(),
            dtype: T::DTYPE,
            values: t.data().iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect(),
        });
    }

    pub fn get<T: Scalar>(&self, name: &str) -> Result<Tensor<T>> {
        let e = self
            .entries
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| Error::Archive(format!("missing tensor `{name}`")))?;
        Tensor::new(
            e.shape.clone(),
            e.values.iter().map(|&v| T::lit(v)).collect(),
        )
    }

    /// Stores every parameter of `store` as `<prefix>.<name>`.
    pub fn put_store<T: Scalar>(&mut self, prefix: &str, store: &ParamStore<T>) {
        for (_, p) in store.iter() {
            self.put(join(prefix, &p.name), &p.value);
        }
    }

    /// Loads every parameter of `store` from `<prefix>.<name>`; shapes must match.
    pub fn load_store<T: Scalar>(&self, prefix: &str, store: &mut ParamStore<T>) -> Result<()> {
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let name = join(prefix, &store.param(id).name);
            let t = self.get::<T>(&name)?;
            if t.shape() != store.value(id).shape() {
                return Err(Error::Archive(format!(
                    "tensor `{name}` has shape {:?}, expected {:?}",
                    t.shape(),
                    store.value(id).shape()
                )));
            }
            *store.value_mut(id) = t;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut payload = Vec::new();
        let mut index = Vec::with_capacity(self.entries.len());
        for e in &self.entries {
            let offset = payload.len();
            for &v in &e.values {
                match e.dtype {
                    "f32" => (v as f32).write_le(&mut payload),
                    _ => v.write_le(&mut payload),
                }
            }
            index.push(EntryIndex {
                name: e.name.clone(),
                shape: e.shape.clone(),
                dtype: e.dtype.to_string(),
                offset,
                len: payload.len() - offset,
            });
        }
        let index = serde_json::to_vec(&Index {
            meta: self.meta.clone(),
            tensors: index,
        })
        .expect("index serializes");
        let mut out = Vec::with_capacity(self.header.len() + 9 + index.len() + payload.len());
        out.extend_from_slice(self.header.as_bytes());
        out.push(b'\n');
        out.extend_from_slice(&(index.len() as u64).to_le_bytes());
        out.extend_from_slice(&index);
        out.extend_from_slice(&payload);
        out
    }

    /// Parses an archive, requiring the given header line.
    pub fn from_bytes(bytes: &[u8], expected_header: &str) -> Result<Self> {
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Archive("missing header line".into()))?;
        let header = std::str::from_utf8(&bytes[..nl])
            .map_err(|_| Error::Archive("header is not UTF-8".into()))?;
        if header != expected_header {
            return Err(Error::Archive(format!(
                "expected header `{expected_header}`, found `{header}`"
            )));
        }
        let rest = &bytes[nl + 1..];
        if rest.len() < 8 {
            return Err(Error::Archive("truncated index length".into()));
        }
        let ilen = u64::from_le_bytes(rest[..8].try_into().expect("8 bytes")) as usize;
        let rest = &rest[8..];
        if rest.len() < ilen {
            return Err(Error::Archive("truncated index".into()));
        }
        let index: Index = serde_json::from_slice(&rest[..ilen])
            .map_err(|e| Error::Archive(format!("bad index: {e}")))?;
        let payload = &rest[ilen..];
        let mut entries = Vec::with_capacity(index.tensors.len());
        for t in index.tensors {
            let (dtype, width): (&'static str, usize) = match t.dtype.as_str() {
                "f32" => ("f32", 4),
                "f64" => ("f64", 8),
                other => return Err(Error::Archive(format!("unknown dtype `{other}`"))),
            };
            let numel: usize = t.shape.iter().product();
            if t.len != numel * width || t.offset + t.len > payload.len() {
                return Err(Error::Archive(format!("corrupt payload for `{}`", t.name)));
            }
            let raw = &payload[t.offset..t.offset + t.len];
            let values = raw
                .chunks(width)
                .map(|c| if width == 4 { f32::read_le(c) as f64 } else { f64::read_le(c) })
                .collect();
            entries.push(Entry {
                name: t.name,
                shape: t.shape,
                dtype,
                values,
            });
        }
        Ok(Self {
            header: header.to_string(),
            meta: index.meta,
            entries,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path, expected_header: &str) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?, expected_header)
    }
}

fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_preserves_bits_and_meta() {
        let mut a = Archive::new("TEST-v1");
        a.meta = serde_json::json!({"step": 7});
        let t32 = Tensor::<f32>::new(vec![2, 2], vec![0.1, -1e-30, f32::MAX, 3.0]).unwrap();
        let t64 = Tensor::<f64>::new(vec![3], vec![0.1, 1e-300, -2.0]).unwrap();
        a.put("a", &t32);
        a.put("b", &t64);
        let back = Archive::from_bytes(&a.to_bytes(), "TEST-v1").unwrap();
        assert_eq!(back.meta["step"], 7);
        assert_eq!(back.get::<f32>("a").unwrap(), t32);
        assert_eq!(back.get::<f64>("b").unwrap(), t64);
    }

    #[test]
    fn wrong_header_is_rejected() {
        let a = Archive::new("ONE-v1");
        let err = Archive::from_bytes(&a.to_bytes(), "TWO-v1").unwrap_err();
        assert!(err.to_string().contains("TWO-v1"));
    }
}
