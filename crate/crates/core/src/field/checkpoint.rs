//! Binary tensor container: `PNRF1`, then a little-endian `u32` tensor
//! count, then per tensor a `u32` name length, the UTF-8 name, a `u32`
//! element count and the raw little-endian `f32` values.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::diffmath::Real;
use crate::{Error, Result};

use super::RadianceField;

pub const MAGIC: &[u8; 5] = b"PNRF1";

pub type NamedTensors = Vec<(String, Vec<f32>)>;

pub fn encode_tensors(tensors: &[(String, Vec<f32>)]) -> Vec<u8> {
    let payload: usize = tensors.iter().map(|(n, v)| 8 + n.len() + 4 * v.len()).sum();
    let mut buf = Vec::with_capacity(MAGIC.len() + 4 + payload);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, values) in tensors {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(values.len() as u32).to_le_bytes());
        for v in values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    buf
}

pub fn decode_tensors(bytes: &[u8], path: &Path) -> Result<NamedTensors> {
    let bad = |reason: &str| Error::checkpoint(path, reason);
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(bad("missing PNRF1 magic string"));
    }
    let mut pos = MAGIC.len();
    let mut take = |n: usize| -> Result<&[u8]> {
        let end = pos
            .checked_add(n)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| bad("truncated file"))?;
        let s = &bytes[pos..end];
        pos = end;
        Ok(s)
    };
    let read_u32 = |s: &[u8]| u32::from_le_bytes(s.try_into().unwrap()) as usize;

    let count = read_u32(take(4)?);
    let mut out = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let name_len = read_u32(take(4)?);
        let name = std::str::from_utf8(take(name_len)?)
            .map_err(|_| bad("tensor name is not UTF-8"))?
            .to_owned();
        let n = read_u32(take(4)?);
        let raw = take(n.checked_mul(4).ok_or_else(|| bad("tensor too large"))?)?;
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        out.push((name, values));
    }
    if pos != bytes.len() {
        return Err(bad("trailing bytes after last tensor"));
    }
    Ok(out)
}

pub fn write_tensors(path: &Path, tensors: &[(String, Vec<f32>)]) -> Result<()> {
    let bytes = encode_tensors(tensors);
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn read_tensors(path: &Path) -> Result<NamedTensors> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_tensors(&bytes, path)
}

impl<F: Real> RadianceField<F> {
    pub fn to_named_f32(&self) -> NamedTensors {
        self.named()
            .map(|(n, p)| {
                (
                    n.to_owned(),
                    p.values().iter().map(|v| v.f64() as f32).collect(),
                )
            })
            .collect()
    }

    pub fn from_named_f32(config: super::FieldConfig, named: &[(String, Vec<f32>)]) -> Result<Self> {
        let converted: Vec<(String, Vec<F>)> = named
            .iter()
            .map(|(n, v)| (n.clone(), v.iter().map(|&x| F::c(x as f64)).collect()))
            .collect();
        Self::from_named(config, &converted)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_bit_exact() {
        let t = vec![("ab".to_string(), vec![1.0f32, -0.5])];
        let bytes = encode_tensors(&t);
        let mut want = b"PNRF1".to_vec();
        want.extend(1u32.to_le_bytes());
        want.extend(2u32.to_le_bytes());
        want.extend(b"ab");
        want.extend(2u32.to_le_bytes());
        want.extend(1.0f32.to_le_bytes());
        want.extend((-0.5f32).to_le_bytes());
        assert_eq!(bytes, want);
        assert_eq!(decode_tensors(&bytes, Path::new("x")).unwrap(), t);
    }

    #[test]
    fn corrupted_magic_is_reported() {
        let mut bytes = encode_tensors(&[("w".into(), vec![0.0])]);
        bytes[0] = b'X';
        let err = decode_tensors(&bytes, Path::new("bad.ckpt")).unwrap_err();
        assert!(err.to_string().contains("magic"), "{err}");
    }

    #[test]
    fn truncation_is_reported() {
        let bytes = encode_tensors(&[("w".into(), vec![0.0, 1.0])]);
        let err = decode_tensors(&bytes[..bytes.len() - 2], Path::new("t")).unwrap_err();
        assert!(err.to_string().contains("truncated"));
    }
}
