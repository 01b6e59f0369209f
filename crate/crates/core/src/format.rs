//! Binary tensor files.
//!
//! Both layouts are a 4-byte magic, a version byte, a little-endian `u32`
//! header length, a JSON header and a raw payload.
//!
//! * `QTNS`: f32 tensors; header `{name, dtype, shape}`, payload little-endian
//!   floats. `dtype` "f64" is accepted on read and narrowed with a warning.
//! * `QDFQ`: quantized tensors; header `{name, shape, bits, codebook,
//!   code_bytes}` with codebook entries as 17-significant-digit strings,
//!   payload the packed codes.

use std::path::Path;

use serde::{Deserialize, Serialize, Serializer};

use crate::codec::{pack_codes, packed_len, shape_len, unpack_codes, QuantizedTensor, Tensor};
use crate::error::{Error, Result};

pub const TENSOR_MAGIC: &[u8; 4] = b"QTNS";
pub const QUANTIZED_MAGIC: &[u8; 4] = b"QDFQ";
pub const VERSION: u8 = 1;

/// Scientific notation with 17 significant digits, which always parses
/// back to the same f64.
pub fn sig17(x: f64) -> String {
    format!("{x:.16e}")
}

/// `serialize_with` helpers writing f64 values as 17-significant-digit
/// JSON numbers. Only meaningful with `serde_json`.
pub mod json_f64 {
    use super::*;
    use serde_json::value::RawValue;

    fn raw(x: f64) -> Box<RawValue> {
        if x.is_finite() {
            RawValue::from_string(sig17(x)).expect("scientific notation is valid JSON")
        } else {
            RawValue::from_string("null".into()).expect("null is valid JSON")
        }
    }

    pub fn one<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        raw(*x).serialize(s)
    }

    pub fn many<S: Serializer>(xs: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
        xs.iter().map(|&x| raw(x)).collect::<Vec<_>>().serialize(s)
    }
}

#[derive(Serialize, Deserialize)]
struct TensorHeader {
    name: String,
    dtype: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct QuantizedHeader {
    name: String,
    shape: Vec<usize>,
    bits: u32,
    codebook: Vec<String>,
    code_bytes: usize,
}

fn frame(magic: &[u8; 4], header: &[u8], payload_len: usize) -> Result<Vec<u8>> {
    let len = u32::try_from(header.len()).map_err(|_| Error::InvalidArgument("header too large".into()))?;
    let mut out = Vec::with_capacity(9 + header.len() + payload_len);
    out.extend_from_slice(magic);
    out.push(VERSION);
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(header);
    Ok(out)
}

/// Split a framed file into `(header, payload)`.
fn unframe<'a>(kind: &'static str, magic: &[u8; 4], bytes: &'a [u8]) -> Result<(&'a [u8], &'a [u8])> {
    if bytes.len() < 9 {
        return Err(Error::format(kind, "truncated prefix"));
    }
    if &bytes[..4] != magic {
        return Err(Error::format(kind, format!("bad magic {:?}", String::from_utf8_lossy(&bytes[..4]))));
    }
    if bytes[4] != VERSION {
        return Err(Error::format(kind, format!("unsupported version {}", bytes[4])));
    }
    let len = u32::from_le_bytes(bytes[5..9].try_into().expect("4 bytes")) as usize;
    let rest = &bytes[9..];
    if rest.len() < len {
        return Err(Error::format(kind, "truncated header"));
    }
    Ok(rest.split_at(len))
}

pub fn tensor_to_bytes(t: &Tensor) -> Result<Vec<u8>> {
    let header = serde_json::to_vec(&TensorHeader {
        name: t.name.clone(),
        dtype: "f32".into(),
        shape: t.shape.clone(),
    })?;
    let mut out = frame(TENSOR_MAGIC, &header, 4 * t.values.len())?;
    for v in &t.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn tensor_from_bytes(bytes: &[u8]) -> Result<Tensor> {
    const KIND: &str = "QTNS";
    let (header, payload) = unframe(KIND, TENSOR_MAGIC, bytes)?;
    let h: TensorHeader = serde_json::from_slice(header)?;
    let n = shape_len(&h.shape).ok_or_else(|| Error::format(KIND, "shape overflows"))?;
    let width = match h.dtype.as_str() {
        "f32" => 4,
        "f64" => 8,
        other => return Err(Error::format(KIND, format!("unsupported dtype {other:?}"))),
    };
    if Some(payload.len()) != n.checked_mul(width) {
        return Err(Error::format(
            KIND,
            format!("{n} {} values need {} bytes, found {}", h.dtype, n * width, payload.len()),
        ));
    }
    let values: Vec<f32> = if width == 4 {
        payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect()
    } else {
        log::warn!("tensor {:?} stored as f64; narrowing to f32", h.name);
        payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")) as f32)
            .collect()
    };
    Tensor::new(h.name, h.shape, values)
}

pub fn quantized_to_bytes(q: &QuantizedTensor) -> Result<Vec<u8>> {
    q.validate()?;
    let codes = pack_codes(&q.codes, q.bits)?;
    let header = serde_json::to_vec(&QuantizedHeader {
        name: q.name.clone(),
        shape: q.shape.clone(),
        bits: q.bits,
        codebook: q.codebook.iter().map(|&c| sig17(c)).collect(),
        code_bytes: codes.len(),
    })?;
    let mut out = frame(QUANTIZED_MAGIC, &header, codes.len())?;
    out.extend_from_slice(&codes);
    Ok(out)
}

pub fn quantized_from_bytes(bytes: &[u8]) -> Result<QuantizedTensor> {
    const KIND: &str = "QDFQ";
    let (header, payload) = unframe(KIND, QUANTIZED_MAGIC, bytes)?;
    let h: QuantizedHeader = serde_json::from_slice(header)?;
    if payload.len() != h.code_bytes {
        return Err(Error::format(
            KIND,
            format!("header declares {} code bytes, found {}", h.code_bytes, payload.len()),
        ));
    }
    let codebook = h
        .codebook
        .iter()
        .map(|s| s.parse::<f64>().map_err(|e| Error::format(KIND, format!("codebook entry {s:?}: {e}"))))
        .collect::<Result<Vec<f64>>>()?;
    let n = shape_len(&h.shape).ok_or_else(|| Error::format(KIND, "shape overflows"))?;
    crate::quantizer::check_bits(h.bits)?;
    if packed_len(n, h.bits) != payload.len() {
        return Err(Error::format(KIND, "code byte count does not match shape"));
    }
    let codes = unpack_codes(payload, h.bits, n)?;
    QuantizedTensor::new(h.name, h.shape, h.bits, codes, codebook)
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    tensor_from_bytes(&read(path.as_ref())?)
}

pub fn read_quantized(path: impl AsRef<Path>) -> Result<QuantizedTensor> {
    quantized_from_bytes(&read(path.as_ref())?)
}
