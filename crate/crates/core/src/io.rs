//! Raw volume files: a JSON descriptor plus a headerless little-endian `f32` blob.
//!
//! The descriptor `volume.json` pairs with the binary `volume.raw` in the same
//! directory:
//!
//! ```json
//! {"dims":[nx,ny,nz],"components":1,"dtype":"f32","origin":[0,0,0],"spacing":[1,1,1]}
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{Dims, FieldError, StructuredField};

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed descriptor {path}: {source}")]
    Descriptor { path: PathBuf, source: serde_json::Error },
    #[error("unsupported dtype {0:?}, only \"f32\" is accepted")]
    BadDtype(String),
    #[error("raw file {path} holds {actual} bytes, descriptor declares {expected}")]
    SizeMismatch { path: PathBuf, expected: u64, actual: u64 },
    #[error(transparent)]
    Shape(#[from] FieldError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Descriptor {
    pub dims: [usize; 3],
    pub components: usize,
    pub dtype: String,
    pub origin: [f64; 3],
    pub spacing: [f64; 3],
}

impl Descriptor {
    pub fn for_field(field: &StructuredField) -> Self {
        Self {
            dims: field.dims().as_array(),
            components: field.components(),
            dtype: "f32".to_owned(),
            origin: field.origin(),
            spacing: field.spacing(),
        }
    }
}

/// Path of the binary blob paired with a descriptor.
pub fn raw_path(descriptor: &Path) -> PathBuf {
    descriptor.with_extension("raw")
}

pub fn load_field(descriptor: &Path) -> Result<StructuredField, LoadError> {
    let text = fs::read_to_string(descriptor)
        .map_err(|source| LoadError::Io { path: descriptor.to_owned(), source })?;
    let desc: Descriptor = serde_json::from_str(&text)
        .map_err(|source| LoadError::Descriptor { path: descriptor.to_owned(), source })?;
    if desc.dtype != "f32" {
        return Err(LoadError::BadDtype(desc.dtype));
    }
    let [nx, ny, nz] = desc.dims;
    let dims = Dims::new(nx, ny, nz)?;
    if desc.components != 1 && desc.components != 3 {
        return Err(FieldError::BadComponents(desc.components).into());
    }
    let raw = raw_path(descriptor);
    let bytes = fs::read(&raw).map_err(|source| LoadError::Io { path: raw.clone(), source })?;
    let expected = (dims.point_count() * desc.components * 4) as u64;
    if bytes.len() as u64 != expected {
        return Err(LoadError::SizeMismatch { path: raw, expected, actual: bytes.len() as u64 });
    }
    let values = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    Ok(StructuredField::new(dims, desc.origin, desc.spacing, desc.components, values)?)
}

pub fn save_field(field: &StructuredField, descriptor: &Path) -> std::io::Result<()> {
    let desc = serde_json::to_string(&Descriptor::for_field(field)).map_err(std::io::Error::other)?;
    fs::write(descriptor, desc)?;
    let mut bytes = Vec::with_capacity(field.values().len() * 4);
    for v in field.values() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(raw_path(descriptor), bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::gen_sphere_field;

    fn write_pair(dir: &Path, desc: &str, raw: &[u8]) -> PathBuf {
        let p = dir.join("vol.json");
        fs::write(&p, desc).unwrap();
        fs::write(dir.join("vol.raw"), raw).unwrap();
        p
    }

    #[test]
    fn loads_two_by_two() {
        let dir = tempfile::tempdir().unwrap();
        let raw: Vec<u8> = [1.0f32, 2.0, 3.0, 4.0].iter().flat_map(|v| v.to_le_bytes()).collect();
        let p = write_pair(
            dir.path(),
            r#"{"dims":[2,2,1],"components":1,"dtype":"f32","origin":[0,0,0],"spacing":[1,1,1]}"#,
            &raw,
        );
        let f = load_field(&p).unwrap();
        assert_eq!(f.values(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(f.dims(), Dims::new_2d(2, 2).unwrap());
    }

    #[test]
    fn short_file_is_size_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_pair(
            dir.path(),
            r#"{"dims":[2,2,1],"components":1,"dtype":"f32","origin":[0,0,0],"spacing":[1,1,1]}"#,
            &[0u8; 15],
        );
        assert!(matches!(load_field(&p), Err(LoadError::SizeMismatch { expected: 16, actual: 15, .. })));
    }

    #[test]
    fn bad_dtype_and_missing_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_pair(
            dir.path(),
            r#"{"dims":[1,1,1],"components":1,"dtype":"f64","origin":[0,0,0],"spacing":[1,1,1]}"#,
            &[0u8; 8],
        );
        assert!(matches!(load_field(&p), Err(LoadError::BadDtype(d)) if d == "f64"));
        assert!(matches!(load_field(&dir.path().join("nope.json")), Err(LoadError::Io { .. })));

        fs::write(&p, r#"{"dims":[1,1,1],"components":1,"dtype":"f32","origin":[0,0,0],"spacing":[1,1,1]}"#).unwrap();
        fs::remove_file(dir.path().join("vol.raw")).unwrap();
        assert!(matches!(load_field(&p), Err(LoadError::Io { .. })));

        fs::write(&p, "{not json").unwrap();
        assert!(matches!(load_field(&p), Err(LoadError::Descriptor { .. })));
    }

    #[test]
    fn round_trip_sphere() {
        let dir = tempfile::tempdir().unwrap();
        let f = gen_sphere_field(Dims::new(5, 6, 7).unwrap(), [2.0, 2.5, 3.0], 1.5).unwrap();
        let p = dir.path().join("sphere.json");
        save_field(&f, &p).unwrap();
        assert_eq!(fs::metadata(raw_path(&p)).unwrap().len(), 5 * 6 * 7 * 4);
        assert_eq!(load_field(&p).unwrap(), f);
    }
}
