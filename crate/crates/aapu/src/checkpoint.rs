//! Binary model checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! b"AAPUCKPT"  u32 version
//! u32 spec length, spec as JSON
//! u32 tensor count, then per tensor: u64 length, length x f64
//! ```
//!
//! Tensors follow [`Mlp::state_tensors`], so a checkpoint restores running
//! batch-norm statistics as well as trainable parameters, bit for bit.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use aapu_core::{Mlp, MlpSpec};

use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"AAPUCKPT";
const VERSION: u32 = 1;

pub fn encode(params: &Mlp) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let spec = serde_json::to_vec(params.spec()).expect("spec serializes");
    out.extend_from_slice(&(spec.len() as u32).to_le_bytes());
    out.extend_from_slice(&spec);
    let tensors = params.state_tensors();
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        out.extend_from_slice(&(t.len() as u64).to_le_bytes());
        for v in t {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode(mut bytes: &[u8]) -> std::result::Result<Mlp, String> {
    let mut take = |n: usize| -> std::result::Result<&[u8], String> {
        if bytes.len() < n {
            return Err(format!("truncated: needed {n} more bytes, {} left", bytes.len()));
        }
        let (head, rest) = bytes.split_at(n);
        bytes = rest;
        Ok(head)
    };
    if take(8)? != MAGIC {
        return Err("not a checkpoint file".into());
    }
    let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().expect("4 bytes"));
    let version = u32_at(take(4)?);
    if version != VERSION {
        return Err(format!("unsupported version {version}"));
    }
    let spec_len = u32_at(take(4)?) as usize;
    let spec: MlpSpec = serde_json::from_slice(take(spec_len)?).map_err(|e| format!("bad spec: {e}"))?;
    let count = u32_at(take(4)?) as usize;
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let len = u64::from_le_bytes(take(8)?.try_into().expect("8 bytes")) as usize;
        let raw = take(len.checked_mul(8).ok_or("tensor length overflows")?)?;
        tensors.push(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect());
    }
    if !bytes.is_empty() {
        return Err(format!("{} trailing bytes", bytes.len()));
    }
    Mlp::from_state(&spec, tensors).map_err(|e| e.to_string())
}

pub fn save(path: &Path, params: &Mlp) -> Result<()> {
    let mut file = fs::File::create(path).map_err(Error::io(path))?;
    file.write_all(&encode(params)).map_err(Error::io(path))
}

pub fn load(path: &Path) -> Result<Mlp> {
    let mut bytes = Vec::new();
    fs::File::open(path).and_then(|mut f| f.read_to_end(&mut bytes)).map_err(Error::io(path))?;
    decode(&bytes).map_err(|message| Error::Checkpoint { path: path.to_path_buf(), message })
}

#[cfg(test)]
mod tests {
    use super::*;
    use aapu_core::{Matrix, Mode};
    use rand::SeedableRng;

    #[test]
    fn round_trip_is_bit_exact() {
        let spec = MlpSpec::new(vec![2, 5, 3, 1], 9).with_batchnorm(true).with_dropout(0.1);
        let mut net = Mlp::init(&spec).unwrap();
        let x = Matrix::from_rows(&[[0.1, -0.3], [2.0, 1.0], [-1.0, 0.5]]).unwrap();
        net.forward(&x, Mode::Train, &mut rand_chacha::ChaCha8Rng::seed_from_u64(1)).unwrap();
        let back = decode(&encode(&net)).unwrap();
        assert_eq!(back.spec(), net.spec());
        let bits =
            |m: &Mlp| -> Vec<u64> { m.state_tensors().iter().flat_map(|t| t.iter().map(|v| v.to_bits())).collect() };
        assert_eq!(bits(&back), bits(&net));
        assert_eq!(back.predict(&x).unwrap(), net.predict(&x).unwrap());
    }

    #[test]
    fn corrupt_input_is_rejected() {
        let net = Mlp::init(&MlpSpec::new(vec![2, 1], 0)).unwrap();
        let bytes = encode(&net);
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode(b"NOTACKPT").is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode(&extra).is_err());
    }
}
