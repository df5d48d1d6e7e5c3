//! Named-tensor container I/O.
//!
//! The on-disk layout is the common 8-byte-length-prefixed JSON-header
//! format:
//!
//! ```text
//!   ┌──────────────┬──────────────────────┬───────────────────────┐
//!   │ 8 bytes      │ H bytes              │ raw data bytes        │
//!   │ header size  │ JSON header (UTF-8)  │ (contiguous, LE)      │
//!   │ (u64 LE)     │                      │                       │
//!   └──────────────┴──────────────────────┴───────────────────────┘
//! ```
//!
//! Each header entry maps a tensor name to `{ "dtype", "shape",
//! "data_offsets" }` with offsets relative to the end of the header.
//! An optional `"__metadata__"` string map is preserved verbatim.
//! BF16 payloads are widened to F32 in memory; files are always
//! written back as F32 in lexicographic name order.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde_json::{json, Value};

use crate::error::{Error, Result};

/// Element type tag accepted on input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    Bf16,
}

impl Dtype {
    pub fn byte_size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::Bf16 => 2,
        }
    }

    fn parse(tag: &str) -> Option<Dtype> {
        match tag {
            "F32" => Some(Dtype::F32),
            "BF16" => Some(Dtype::Bf16),
            _ => None,
        }
    }
}

/// A dense tensor held as f32 regardless of the on-disk dtype.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Tensor {
        assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor { shape, data }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// A checkpoint: a name -> tensor map plus preserved header metadata.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub tensors: BTreeMap<String, Tensor>,
    pub metadata: Option<BTreeMap<String, String>>,
}

impl Checkpoint {
    /// Total scalar parameter count.
    pub fn param_count(&self) -> usize {
        self.tensors.values().map(|t| t.len()).sum()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.tensors.insert(name.into(), tensor);
    }
}

/// Per-expert compatibility findings against a base checkpoint.
#[derive(Debug, Clone, Default)]
pub struct ExpertReport {
    pub missing: Vec<String>,
    pub extra: Vec<String>,
    pub shape_mismatch: Vec<String>,
}

impl ExpertReport {
    pub fn is_ok(&self) -> bool {
        self.missing.is_empty() && self.extra.is_empty() && self.shape_mismatch.is_empty()
    }
}

/// Compatibility verdict for a set of experts.
#[derive(Debug, Clone, Default)]
pub struct CompatReport {
    pub experts: Vec<ExpertReport>,
}

impl CompatReport {
    pub fn is_ok(&self) -> bool {
        self.experts.iter().all(ExpertReport::is_ok)
    }

    pub fn describe(&self) -> String {
        let mut out = String::new();
        for (i, e) in self.experts.iter().enumerate() {
            if e.is_ok() {
                continue;
            }
            out.push_str(&format!(
                "expert {i}: missing={:?} extra={:?} shape_mismatch={:?}; ",
                e.missing, e.extra, e.shape_mismatch
            ));
        }
        out
    }
}

/// OK iff every expert has exactly the base's key set with identical shapes.
pub fn check_compatible(base: &Checkpoint, experts: &[&Checkpoint]) -> CompatReport {
    let mut report = CompatReport::default();
    for expert in experts {
        let mut e = ExpertReport::default();
        for (name, t) in &base.tensors {
            match expert.tensors.get(name) {
                None => e.missing.push(name.clone()),
                Some(et) if et.shape != t.shape => e.shape_mismatch.push(name.clone()),
                Some(_) => {}
            }
        }
        for name in expert.tensors.keys() {
            if !base.tensors.contains_key(name) {
                e.extra.push(name.clone());
            }
        }
        report.experts.push(e);
    }
    report
}

fn bf16_to_f32(bits: u16) -> f32 {
    f32::from_bits((bits as u32) << 16)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 8 {
        return Err(Error::container(path, "file shorter than 8-byte header length"));
    }
    let header_len = u64::from_le_bytes(bytes[0..8].try_into().unwrap()) as usize;
    let data_start = 8usize
        .checked_add(header_len)
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| Error::container(path, "declared header length exceeds file size"))?;
    let header: Value = serde_json::from_slice(&bytes[8..data_start])
        .map_err(|e| Error::container(path, format!("header is not valid JSON: {e}")))?;
    let header = header
        .as_object()
        .ok_or_else(|| Error::container(path, "header is not a JSON object"))?;

    let data = &bytes[data_start..];
    let mut ckpt = Checkpoint::default();
    // (begin, end) ranges seen so far, for the overlap/contiguity check.
    let mut ranges: Vec<(usize, usize)> = Vec::new();

    for (name, entry) in header {
        if name == "__metadata__" {
            let map = entry
                .as_object()
                .ok_or_else(|| Error::container(path, "__metadata__ is not an object"))?;
            let mut meta = BTreeMap::new();
            for (k, v) in map {
                let s = v
                    .as_str()
                    .ok_or_else(|| Error::container(path, "__metadata__ values must be strings"))?;
                meta.insert(k.clone(), s.to_string());
            }
            ckpt.metadata = Some(meta);
            continue;
        }
        let dtype_tag = entry["dtype"]
            .as_str()
            .ok_or_else(|| Error::container(path, format!("tensor {name}: missing dtype")))?;
        let dtype = Dtype::parse(dtype_tag).ok_or_else(|| {
            Error::container(path, format!("tensor {name}: unsupported dtype {dtype_tag}"))
        })?;
        let shape: Vec<usize> = entry["shape"]
            .as_array()
            .ok_or_else(|| Error::container(path, format!("tensor {name}: missing shape")))?
            .iter()
            .map(|v| {
                v.as_u64()
                    .map(|x| x as usize)
                    .ok_or_else(|| Error::container(path, format!("tensor {name}: bad shape entry")))
            })
            .collect::<Result<_>>()?;
        let offs = entry["data_offsets"]
            .as_array()
            .filter(|a| a.len() == 2)
            .ok_or_else(|| Error::container(path, format!("tensor {name}: missing data_offsets")))?;
        let begin = offs[0].as_u64().unwrap_or(u64::MAX) as usize;
        let end = offs[1].as_u64().unwrap_or(0) as usize;
        if end < begin || end > data.len() {
            return Err(Error::container(
                path,
                format!("tensor {name}: byte range [{begin}, {end}) out of bounds"),
            ));
        }
        let numel: usize = shape.iter().product();
        if numel * dtype.byte_size() != end - begin {
            return Err(Error::container(
                path,
                format!(
                    "tensor {name}: size mismatch, shape needs {} bytes but range holds {}",
                    numel * dtype.byte_size(),
                    end - begin
                ),
            ));
        }
        for &(b, e) in &ranges {
            if begin < e && b < end {
                return Err(Error::container(
                    path,
                    format!("tensor {name}: byte range overlaps another tensor"),
                ));
            }
        }
        ranges.push((begin, end));

        let raw = &data[begin..end];
        let values: Vec<f32> = match dtype {
            Dtype::F32 => raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect(),
            Dtype::Bf16 => raw
                .chunks_exact(2)
                .map(|c| bf16_to_f32(u16::from_le_bytes(c.try_into().unwrap())))
                .collect(),
        };
        ckpt.insert(name.clone(), Tensor::new(shape, values));
    }
    Ok(ckpt)
}

/// Writes the canonical form: F32 payloads, lexicographic name order.
/// Two saves of the same checkpoint yield identical bytes.
pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut header = serde_json::Map::new();
    if let Some(meta) = &ckpt.metadata {
        let map: serde_json::Map<String, Value> = meta
            .iter()
            .map(|(k, v)| (k.clone(), Value::String(v.clone())))
            .collect();
        header.insert("__metadata__".to_string(), Value::Object(map));
    }
    let mut offset = 0usize;
    // BTreeMap iteration is already lexicographic.
    for (name, tensor) in &ckpt.tensors {
        let nbytes = tensor.len() * 4;
        header.insert(
            name.clone(),
            json!({
                "dtype": "F32",
                "shape": tensor.shape,
                "data_offsets": [offset, offset + nbytes],
            }),
        );
        offset += nbytes;
    }
    let header_bytes = serde_json::to_vec(&Value::Object(header)).expect("header serialization");

    let mut out = Vec::with_capacity(8 + header_bytes.len() + offset);
    out.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_bytes);
    for tensor in ckpt.tensors.values() {
        for v in &tensor.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn toy() -> Checkpoint {
        let mut c = Checkpoint::default();
        c.insert("w", Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]));
        c
    }

    #[test]
    fn round_trip_single_tensor() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("toy.safetensors");
        save_checkpoint(&toy(), &p).unwrap();
        let loaded = load_checkpoint(&p).unwrap();
        assert_eq!(loaded.param_count(), 4);
        assert_eq!(loaded.tensors["w"].data, vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let dir = tempdir().unwrap();
        let p1 = dir.path().join("a.safetensors");
        let p2 = dir.path().join("b.safetensors");
        let mut c = toy();
        c.insert("b", Tensor::new(vec![3], vec![-1.0, 0.5, f32::MIN_POSITIVE]));
        c.metadata = Some(BTreeMap::from([("origin".into(), "test".into())]));
        save_checkpoint(&c, &p1).unwrap();
        let loaded = load_checkpoint(&p1).unwrap();
        save_checkpoint(&loaded, &p2).unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
    }

    #[test]
    fn canonical_ordering_in_header() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("ord.safetensors");
        let mut c = Checkpoint::default();
        c.insert("b", Tensor::new(vec![1], vec![0.0]));
        c.insert("a", Tensor::new(vec![1], vec![0.0]));
        save_checkpoint(&c, &p).unwrap();
        let bytes = fs::read(&p).unwrap();
        let hlen = u64::from_le_bytes(bytes[0..8].try_into().unwrap()) as usize;
        let header = std::str::from_utf8(&bytes[8..8 + hlen]).unwrap();
        assert!(header.find("\"a\"").unwrap() < header.find("\"b\"").unwrap());
    }

    #[test]
    fn empty_checkpoint_round_trips() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("empty.safetensors");
        save_checkpoint(&Checkpoint::default(), &p).unwrap();
        let loaded = load_checkpoint(&p).unwrap();
        assert_eq!(loaded.param_count(), 0);
    }

    #[test]
    fn size_mismatch_is_rejected() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("bad.safetensors");
        let header = br#"{"w":{"dtype":"F32","shape":[2,2],"data_offsets":[0,12]}}"#;
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&(header.len() as u64).to_le_bytes());
        bytes.extend_from_slice(header);
        bytes.extend_from_slice(&[0u8; 16]);
        fs::write(&p, bytes).unwrap();
        let err = load_checkpoint(&p).unwrap_err();
        assert!(err.to_string().contains("size mismatch"), "{err}");
    }

    #[test]
    fn overlapping_ranges_are_rejected() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("overlap.safetensors");
        let header = br#"{"a":{"dtype":"F32","shape":[2],"data_offsets":[0,8]},"b":{"dtype":"F32","shape":[2],"data_offsets":[4,12]}}"#;
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&(header.len() as u64).to_le_bytes());
        bytes.extend_from_slice(header);
        bytes.extend_from_slice(&[0u8; 12]);
        fs::write(&p, bytes).unwrap();
        assert!(load_checkpoint(&p).is_err());
    }

    #[test]
    fn bf16_is_widened() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("bf16.safetensors");
        // 1.5f32 = 0x3FC00000, bf16 bits 0x3FC0
        let header = br#"{"w":{"dtype":"BF16","shape":[1],"data_offsets":[0,2]}}"#;
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&(header.len() as u64).to_le_bytes());
        bytes.extend_from_slice(header);
        bytes.extend_from_slice(&0x3FC0u16.to_le_bytes());
        fs::write(&p, bytes).unwrap();
        let loaded = load_checkpoint(&p).unwrap();
        assert_eq!(loaded.tensors["w"].data, vec![1.5]);
    }

    #[test]
    fn compat_report_flags_mismatches() {
        let base = toy();
        let ok = toy();
        assert!(check_compatible(&base, &[&ok]).is_ok());

        let mut bad_shape = Checkpoint::default();
        bad_shape.insert("w", Tensor::new(vec![2, 3], vec![0.0; 6]));
        let r = check_compatible(&base, &[&bad_shape]);
        assert_eq!(r.experts[0].shape_mismatch, vec!["w"]);

        let mut extra = toy();
        extra.insert("bias", Tensor::new(vec![1], vec![0.0]));
        let r = check_compatible(&base, &[&extra]);
        assert_eq!(r.experts[0].extra, vec!["bias"]);

        let r = check_compatible(&extra, &[&base]);
        assert_eq!(r.experts[0].missing, vec!["bias"]);
    }

    #[test]
    fn param_count_is_additive() {
        let mut c = toy();
        c.insert("v", Tensor::new(vec![3, 5], vec![0.0; 15]));
        assert_eq!(c.param_count(), 19);
    }
}
