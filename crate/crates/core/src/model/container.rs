//! Named-tensor container: magic, JSON manifest, raw little-endian `f32`
//! payloads in manifest order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    meta: serde_json::Value,
    tensors: Vec<Entry>,
}

pub fn encode(magic: [u8; 4], meta: serde_json::Value, tensors: &[(&str, &Tensor<f32>)]) -> Result<Vec<u8>> {
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        meta,
        tensors: tensors
            .iter()
            .map(|(name, t)| Entry {
                name: name.to_string(),
                shape: t.shape().to_vec(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&manifest)?;
    let payload: usize = tensors.iter().map(|(_, t)| t.numel() * 4).sum();
    let mut out = Vec::with_capacity(12 + json.len() + payload);
    out.extend_from_slice(&magic);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, t) in tensors {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode(magic: [u8; 4], bytes: &[u8], path: &Path) -> Result<(serde_json::Value, Vec<(String, Tensor<f32>)>)> {
    let bad = |reason: String| Error::format(path, reason);
    if bytes.len() < 12 || bytes[..4] != magic {
        return Err(bad(format!("missing {:?} header", String::from_utf8_lossy(&magic))));
    }
    let json_len = u64::from_le_bytes(bytes[4..12].try_into().unwrap()) as usize;
    let json = bytes
        .get(12..12 + json_len)
        .ok_or_else(|| bad("truncated manifest".into()))?;
    let manifest: Manifest = serde_json::from_slice(json).map_err(|e| bad(format!("manifest: {e}")))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(bad(format!("unsupported format version {}", manifest.format_version)));
    }
    let mut pos = 12 + json_len;
    let mut tensors = Vec::with_capacity(manifest.tensors.len());
    for e in manifest.tensors {
        let n: usize = e.shape.iter().product();
        let raw = bytes
            .get(pos..pos + 4 * n)
            .ok_or_else(|| bad(format!("truncated payload for `{}`", e.name)))?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push((e.name, Tensor::new(e.shape, data)?));
        pos += 4 * n;
    }
    if pos != bytes.len() {
        return Err(bad(format!("{} trailing bytes", bytes.len() - pos)));
    }
    Ok((manifest.meta, tensors))
}

pub fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let a = Tensor::new(vec![2, 2], vec![1.0f32, -0.0, f32::MIN_POSITIVE, 3.5e-12]).unwrap();
        let b = Tensor::new(vec![0], vec![]).unwrap();
        let meta = serde_json::json!({"k": 1});
        let bytes = encode(*b"TEST", meta.clone(), &[("a", &a), ("b", &b)]).unwrap();
        let (m, ts) = decode(*b"TEST", &bytes, Path::new("x")).unwrap();
        assert_eq!(m, meta);
        assert_eq!(ts[0].0, "a");
        let bits: Vec<u32> = ts[0].1.data().iter().map(|v| v.to_bits()).collect();
        assert_eq!(bits, a.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        assert_eq!(ts[1].1.shape(), &[0]);
    }

    #[test]
    fn corrupt_inputs_are_format_errors() {
        let a = Tensor::new(vec![3], vec![1.0f32, 2.0, 3.0]).unwrap();
        let bytes = encode(*b"TEST", serde_json::Value::Null, &[("a", &a)]).unwrap();
        let p = Path::new("x");
        assert!(matches!(decode(*b"NOPE", &bytes, p), Err(Error::Format { .. })));
        assert!(matches!(decode(*b"TEST", &bytes[..bytes.len() - 1], p), Err(Error::Format { .. })));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(decode(*b"TEST", &extra, p), Err(Error::Format { .. })));
    }
}
