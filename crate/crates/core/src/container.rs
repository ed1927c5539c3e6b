//! On-disk arrays: a directory holding `meta.json` and a raw little-endian
//! `data.bin`, row-major.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dtype {
    #[serde(rename = "f64le")]
    F64,
    #[serde(rename = "c64le-interleaved")]
    C64,
}

impl Dtype {
    pub fn element_size(self) -> usize {
        match self {
            Dtype::F64 => 8,
            Dtype::C64 => 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub schema_version: u32,
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: Dtype,
    /// Named coordinate arrays. Point-valued axes are flattened row-major.
    #[serde(default)]
    pub axes: BTreeMap<String, Vec<f64>>,
    /// Free-form scalar metadata (order, geometry tag, grid parameters).
    #[serde(default)]
    pub attrs: BTreeMap<String, serde_json::Value>,
}

impl Meta {
    pub fn new(name: &str, shape: Vec<usize>, dtype: Dtype) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            name: name.into(),
            shape,
            dtype,
            axes: BTreeMap::new(),
            attrs: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn axis(mut self, name: &str, values: Vec<f64>) -> Self {
        self.axes.insert(name.into(), values);
        self
    }

    pub fn attr(mut self, name: &str, value: impl Serialize) -> Self {
        self.attrs
            .insert(name.into(), serde_json::to_value(value).expect("attribute serializes"));
        self
    }

    pub fn get_axis(&self, name: &str) -> Result<&[f64]> {
        self.axes
            .get(name)
            .map(|v| v.as_slice())
            .ok_or_else(|| Error::Schema(format!("{}: missing axis `{name}`", self.name)))
    }

    pub fn get_attr<T: serde::de::DeserializeOwned>(&self, name: &str) -> Result<T> {
        let v = self
            .attrs
            .get(name)
            .ok_or_else(|| Error::Schema(format!("{}: missing attribute `{name}`", self.name)))?;
        serde_json::from_value(v.clone()).map_err(|e| Error::Schema(format!("{}: attribute `{name}`: {e}", self.name)))
    }
}

fn write_meta(dir: &Path, meta: &Meta, payload: Vec<u8>) -> Result<()> {
    fs::create_dir_all(dir)?;
    let text = serde_json::to_string_pretty(meta).map_err(|e| Error::Schema(e.to_string()))?;
    fs::write(dir.join("meta.json"), text + "\n")?;
    fs::write(dir.join("data.bin"), payload)?;
    Ok(())
}

pub fn write_f64(dir: &Path, meta: &Meta, values: &[f64]) -> Result<()> {
    if meta.dtype != Dtype::F64 || meta.len() != values.len() {
        return Err(invalid("container", format!("{}: shape/dtype does not match the payload", meta.name)));
    }
    let mut buf = Vec::with_capacity(values.len() * 8);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    write_meta(dir, meta, buf)
}

pub fn write_c64(dir: &Path, meta: &Meta, values: &[Complex64]) -> Result<()> {
    if meta.dtype != Dtype::C64 || meta.len() != values.len() {
        return Err(invalid("container", format!("{}: shape/dtype does not match the payload", meta.name)));
    }
    let mut buf = Vec::with_capacity(values.len() * 16);
    for z in values {
        buf.extend_from_slice(&z.re.to_le_bytes());
        buf.extend_from_slice(&z.im.to_le_bytes());
    }
    write_meta(dir, meta, buf)
}

fn read_raw(dir: &Path, dtype: Dtype) -> Result<(Meta, Vec<u8>)> {
    let path = dir.join("meta.json");
    if !path.is_file() {
        return Err(Error::Schema(format!("{}: no container here (missing meta.json)", dir.display())));
    }
    let text = fs::read_to_string(path)?;
    let meta: Meta = serde_json::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", dir.display())))?;
    if meta.schema_version != SCHEMA_VERSION {
        return Err(Error::Schema(format!(
            "{}: schema version {} (expected {SCHEMA_VERSION})",
            meta.name, meta.schema_version
        )));
    }
    if meta.dtype != dtype {
        return Err(Error::Schema(format!("{}: dtype {:?} (expected {dtype:?})", meta.name, meta.dtype)));
    }
    let bytes = fs::read(dir.join("data.bin"))?;
    if bytes.len() != meta.len() * dtype.element_size() {
        return Err(Error::Schema(format!(
            "{}: payload has {} bytes, shape needs {}",
            meta.name,
            bytes.len(),
            meta.len() * dtype.element_size()
        )));
    }
    Ok((meta, bytes))
}

fn f64_at(b: &[u8]) -> f64 {
    f64::from_le_bytes(b.try_into().expect("8-byte chunk"))
}

pub fn read_f64(dir: &Path) -> Result<(Meta, Vec<f64>)> {
    let (meta, bytes) = read_raw(dir, Dtype::F64)?;
    Ok((meta, bytes.chunks_exact(8).map(f64_at).collect()))
}

pub fn read_c64(dir: &Path) -> Result<(Meta, Vec<Complex64>)> {
    let (meta, bytes) = read_raw(dir, Dtype::C64)?;
    Ok((
        meta,
        bytes
            .chunks_exact(16)
            .map(|c| Complex64::new(f64_at(&c[..8]), f64_at(&c[8..])))
            .collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_both_dtypes() {
        let dir = tempfile::tempdir().unwrap();
        let meta = Meta::new("x", vec![2, 3], Dtype::F64)
            .axis("t", vec![0.5, 1.5])
            .attr("k", 1usize);
        let vals = [1.0, -2.0, 3.5, f64::MIN_POSITIVE, 0.0, 1e300];
        write_f64(&dir.path().join("x"), &meta, &vals).unwrap();
        let (m, v) = read_f64(&dir.path().join("x")).unwrap();
        assert_eq!(m, meta);
        assert_eq!(v, vals);
        assert_eq!(m.get_attr::<usize>("k").unwrap(), 1);

        let cm = Meta::new("z", vec![2], Dtype::C64);
        let z = [Complex64::new(1.0, -1.0), Complex64::new(0.25, 3.0)];
        write_c64(&dir.path().join("z"), &cm, &z).unwrap();
        assert_eq!(std::fs::metadata(dir.path().join("z/data.bin")).unwrap().len(), 32);
        assert_eq!(read_c64(&dir.path().join("z")).unwrap().1, z);
    }

    #[test]
    fn mismatches_are_schema_errors() {
        let dir = tempfile::tempdir().unwrap();
        let meta = Meta::new("x", vec![3], Dtype::F64);
        assert!(write_f64(dir.path(), &meta, &[1.0]).is_err());
        write_f64(dir.path(), &meta, &[1.0, 2.0, 3.0]).unwrap();
        assert!(matches!(read_c64(dir.path()), Err(Error::Schema(_))));
        std::fs::write(dir.path().join("data.bin"), [0u8; 16]).unwrap();
        assert!(matches!(read_f64(dir.path()), Err(Error::Schema(_))));
    }
}
