//! Binary container shared by feature matrices and model files:
//! `u64 LE header length | JSON header | row-major little-endian payload`.
//! The header always carries `dtype` and `values` (payload element count).

use std::path::Path;

use serde_json::Value;

use crate::error::{Error, Result};

trait Scalar: Copy {
    const DTYPE: &'static str;
    const SIZE: usize;
    fn put(self, out: &mut Vec<u8>);
    fn get(b: &[u8]) -> Self;
}

impl Scalar for f32 {
    const DTYPE: &'static str = "f32";
    const SIZE: usize = 4;
    fn put(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn get(b: &[u8]) -> Self {
        f32::from_le_bytes(b.try_into().unwrap())
    }
}

impl Scalar for f64 {
    const DTYPE: &'static str = "f64";
    const SIZE: usize = 8;
    fn put(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn get(b: &[u8]) -> Self {
        f64::from_le_bytes(b.try_into().unwrap())
    }
}

fn encode<T: Scalar>(header: &Value, payload: &[T]) -> Result<Vec<u8>> {
    let mut header = header.clone();
    let obj = header
        .as_object_mut()
        .ok_or_else(|| Error::Input("container header must be a JSON object".into()))?;
    obj.insert("dtype".into(), Value::from(T::DTYPE));
    obj.insert("values".into(), Value::from(payload.len()));
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(8 + json.len() + payload.len() * T::SIZE);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for &v in payload {
        v.put(&mut out);
    }
    Ok(out)
}

fn decode<T: Scalar>(bytes: &[u8]) -> Result<(Value, Vec<T>)> {
    if bytes.len() < 8 {
        return Err(Error::Format("container shorter than its length prefix".into()));
    }
    let hlen = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
    let body = bytes
        .get(8..8usize.saturating_add(hlen))
        .ok_or_else(|| Error::Format("truncated container header".into()))?;
    let header: Value = serde_json::from_slice(body)
        .map_err(|e| Error::Format(format!("container header: {e}")))?;
    if header["dtype"] != T::DTYPE {
        return Err(Error::Format(format!(
            "payload dtype {} (expected {})",
            header["dtype"],
            T::DTYPE
        )));
    }
    let values = header["values"]
        .as_u64()
        .ok_or_else(|| Error::Format("container header lacks `values`".into()))? as usize;
    let payload = &bytes[8 + hlen..];
    if payload.len() != values * T::SIZE {
        return Err(Error::Format(format!(
            "payload holds {} bytes, header promises {} values",
            payload.len(),
            values
        )));
    }
    Ok((header, payload.chunks_exact(T::SIZE).map(T::get).collect()))
}

pub(crate) fn encode_f32(header: &Value, payload: &[f32]) -> Result<Vec<u8>> {
    encode(header, payload)
}

pub(crate) fn decode_f32(bytes: &[u8]) -> Result<(Value, Vec<f32>)> {
    decode(bytes)
}

pub(crate) fn encode_f64(header: &Value, payload: &[f64]) -> Result<Vec<u8>> {
    encode(header, payload)
}

pub(crate) fn decode_f64(bytes: &[u8]) -> Result<(Value, Vec<f64>)> {
    decode(bytes)
}

pub(crate) fn write_f32(path: impl AsRef<Path>, header: &Value, payload: &[f32]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(header, payload)?).map_err(Error::at(path))
}

pub(crate) fn read_f32(path: impl AsRef<Path>) -> Result<(Value, Vec<f32>)> {
    let path = path.as_ref();
    decode(&std::fs::read(path).map_err(Error::at(path))?)
}

pub(crate) fn write_f64(path: impl AsRef<Path>, header: &Value, payload: &[f64]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(header, payload)?).map_err(Error::at(path))
}

pub(crate) fn read_f64(path: impl AsRef<Path>) -> Result<(Value, Vec<f64>)> {
    let path = path.as_ref();
    decode(&std::fs::read(path).map_err(Error::at(path))?)
}
