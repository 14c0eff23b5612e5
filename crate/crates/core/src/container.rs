//! Tensor container shared by checkpoints and fitted simplifiers.
//!
//! Layout: an 8-byte little-endian header length `H`, `H` bytes of JSON
//! header, then the raw little-endian scalar blob. A well-formed file is
//! exactly `8 + H + blob_len` bytes long.

use std::fs;
use std::io::Read;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Scalar, Tensor};

pub const FORMAT: &str = "proxylab-container";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset within the blob.
    pub offset: u64,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContainerHeader {
    pub format: String,
    pub format_version: u32,
    pub kind: String,
    pub dtype: String,
    pub meta: serde_json::Value,
    pub tensors: Vec<TensorEntry>,
    pub blob_len: u64,
}

impl ContainerHeader {
    pub fn meta_as<M: DeserializeOwned>(&self) -> Result<M> {
        Ok(serde_json::from_value(self.meta.clone())?)
    }
}

pub fn write_container<T: Scalar>(
    path: &Path,
    kind: &str,
    meta: &impl Serialize,
    tensors: &[(String, &Tensor<T>)],
) -> Result<()> {
    let mut blob = Vec::new();
    let mut entries = Vec::with_capacity(tensors.len());
    for (name, t) in tensors {
        let offset = blob.len() as u64;
        for &v in t.data() {
            v.write_le(&mut blob);
        }
        entries.push(TensorEntry {
            name: name.clone(),
            shape: t.shape().to_vec(),
            offset,
            bytes: blob.len() as u64 - offset,
        });
    }
    let header = ContainerHeader {
        format: FORMAT.into(),
        format_version: FORMAT_VERSION,
        kind: kind.into(),
        dtype: T::DTYPE.into(),
        meta: serde_json::to_value(meta)?,
        tensors: entries,
        blob_len: blob.len() as u64,
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(8 + json.len() + blob.len());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&blob);
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads only the length prefix and JSON header. Returns the header and the
/// byte offset at which the blob starts.
pub fn read_header(path: &Path) -> Result<(ContainerHeader, u64)> {
    let mut f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut len = [0u8; 8];
    f.read_exact(&mut len)
        .map_err(|_| Error::Format(format!("{}: shorter than the length prefix", path.display())))?;
    let h = u64::from_le_bytes(len);
    let size = f.metadata().map_err(|e| Error::io(path, e))?.len();
    if 8 + h > size {
        return Err(Error::Format(format!("{}: header length {h} exceeds file size {size}", path.display())));
    }
    let mut json = vec![0u8; h as usize];
    f.read_exact(&mut json).map_err(|e| Error::io(path, e))?;
    let header: ContainerHeader = serde_json::from_slice(&json)?;
    if header.format != FORMAT {
        return Err(Error::Format(format!("{}: not a {FORMAT} file", path.display())));
    }
    Ok((header, 8 + h))
}

pub fn read_container<T: Scalar>(path: &Path) -> Result<(ContainerHeader, Vec<(String, Tensor<T>)>)> {
    let (header, start) = read_header(path)?;
    if header.dtype != T::DTYPE {
        return Err(Error::Format(format!(
            "{}: stored dtype {} but {} requested",
            path.display(),
            header.dtype,
            T::DTYPE
        )));
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let blob = &bytes[start as usize..];
    let mut out = Vec::with_capacity(header.tensors.len());
    for e in &header.tensors {
        let n: usize = e.shape.iter().product();
        if e.bytes != (n * T::BYTES) as u64 {
            return Err(Error::Format(format!("tensor `{}`: manifest size disagrees with its shape", e.name)));
        }
        let end = e.offset + e.bytes;
        if end > blob.len() as u64 {
            return Err(Error::Format(format!(
                "tensor `{}` is truncated: needs blob bytes {}..{}, blob has {}",
                e.name,
                e.offset,
                end,
                blob.len()
            )));
        }
        let raw = &blob[e.offset as usize..end as usize];
        let data = raw.chunks_exact(T::BYTES).map(T::read_le).collect();
        out.push((e.name.clone(), Tensor::new(e.shape.clone(), data)?));
    }
    if blob.len() as u64 != header.blob_len {
        return Err(Error::Format(format!(
            "{}: blob is {} bytes, header says {}",
            path.display(),
            blob.len(),
            header.blob_len
        )));
    }
    Ok((header, out))
}
