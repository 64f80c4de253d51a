use std::path::Path;

use serde_json::json;

use super::{ArchConfig, BreathDetector};
use crate::container;
use crate::error::{Error, Result};

pub const MODEL_VERSION: &str = "breathline-detector/1";

/// Serializes to the model container: JSON header with version,
/// architecture and tensor index, then every tensor as little-endian f32.
pub fn write_model(model: &BreathDetector<f32>) -> Result<Vec<u8>> {
    write_model_with_meta(model, &serde_json::Value::Null)
}

/// As [`write_model`], recording `meta` (provenance, configs) in the header.
pub fn write_model_with_meta(model: &BreathDetector<f32>, meta: &serde_json::Value) -> Result<Vec<u8>> {
    let mut payload = Vec::new();
    let mut index = Vec::new();
    for (name, data) in model.params().into_iter().chain(model.buffers()) {
        index.push(json!({"name": name, "shape": [data.len()], "offset": payload.len()}));
        payload.extend_from_slice(data);
    }
    let mut header = json!({
        "version": MODEL_VERSION,
        "arch": model.arch,
        "tensors": index,
    });
    if !meta.is_null() {
        header["meta"] = meta.clone();
    }
    container::encode_f32(&header, &payload)
}

pub fn read_model(bytes: &[u8]) -> Result<BreathDetector<f32>> {
    let (header, payload) = container::decode_f32(bytes)?;
    let version = header["version"].as_str().unwrap_or_default();
    if version != MODEL_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version.to_string(),
            expected: MODEL_VERSION.to_string(),
        });
    }
    let arch: ArchConfig = serde_json::from_value(header["arch"].clone())
        .map_err(|e| Error::Format(format!("model architecture: {e}")))?;
    let mut model = BreathDetector::<f32>::new(arch, 0)
        .map_err(|e| Error::Format(format!("model architecture: {e}")))?;
    let names: Vec<&str> = model
        .params()
        .into_iter()
        .chain(model.buffers())
        .map(|(n, _)| n)
        .collect();
    let index = header["tensors"]
        .as_array()
        .ok_or_else(|| Error::Format("model header lacks tensor index".into()))?;
    if index.len() != names.len() {
        return Err(Error::Format(format!("expected {} tensors, found {}", names.len(), index.len())));
    }
    let slots = model.state_mut();
    for ((entry, slot), name) in index.iter().zip(slots).zip(names) {
        if entry["name"] != name {
            return Err(Error::Format(format!("tensor {} out of order (expected {name})", entry["name"])));
        }
        let offset = entry["offset"].as_u64().unwrap_or(u64::MAX) as usize;
        let len = entry["shape"][0].as_u64().unwrap_or(u64::MAX) as usize;
        if len != slot.len() {
            return Err(Error::Format(format!("tensor {name} has {len} values, expected {}", slot.len())));
        }
        let src = payload
            .get(offset..offset.saturating_add(len))
            .ok_or_else(|| Error::Format(format!("tensor {name} overruns payload")))?;
        slot.copy_from_slice(src);
    }
    Ok(model)
}

pub fn save_model(model: &BreathDetector<f32>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, write_model(model)?).map_err(Error::at(path))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<BreathDetector<f32>> {
    let path = path.as_ref();
    read_model(&std::fs::read(path).map_err(Error::at(path))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;

    fn small() -> BreathDetector<f32> {
        let arch = ArchConfig {
            n_features: 10,
            chunk_frames: 80,
            lstm_hidden: 5,
            ..Default::default()
        };
        let mut m = BreathDetector::new(arch, 11).unwrap();
        m.input_mean.iter_mut().enumerate().for_each(|(i, v)| *v = i as f32);
        m.bn1.running_var[0] = 3.5;
        m
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = small();
        let back = read_model(&write_model(&m).unwrap()).unwrap();
        assert_eq!(back, m);
        let x = Tensor::new(vec![1, 80, 10], (0..800).map(|i| (i as f32 * 0.37).sin()).collect()).unwrap();
        assert_eq!(m.forward_inference(&x).unwrap(), back.forward_inference(&x).unwrap());
    }

    #[test]
    fn corrupted_payload_is_format_error() {
        let mut bytes = write_model(&small()).unwrap();
        bytes.truncate(bytes.len() - 4);
        assert!(matches!(read_model(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn old_version_is_rejected() {
        let m = small();
        let header = json!({"version": "breathline-detector/0", "arch": m.arch, "tensors": []});
        let bytes = container::encode_f32(&header, &[]).unwrap();
        assert!(matches!(read_model(&bytes), Err(Error::UnsupportedVersion { .. })));
    }
}
