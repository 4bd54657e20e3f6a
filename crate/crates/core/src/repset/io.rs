//! Binary family files.
//!
//! Layout (little-endian): magic `RPFM`, version byte, `k: u32`, `s: u32`,
//! `t: u64`, `α, δ, ν: f64`, then the `t·s` set elements in set order, each
//! as a `max(1, ⌈log₂ k⌉)`-bit unsigned integer packed least-significant
//! bit first, with the final byte zero-padded.

use std::path::Path;

use bitvec::prelude::*;

use super::{validate_set, RepFamily, RepFamilyParams, RepSetError};

pub const FAMILY_MAGIC: &[u8; 4] = b"RPFM";
pub const FAMILY_VERSION: u8 = 1;
const HEADER_LEN: usize = 4 + 1 + 4 + 4 + 8 + 3 * 8;
/// Largest element count written or read.
const MAX_ELEMENTS: u64 = 1 << 31;

pub fn encode_family(f: &RepFamily) -> Result<Vec<u8>, RepSetError> {
    let p = f.params();
    let total = p.t.checked_mul(p.s as u64).filter(|&x| x <= MAX_ELEMENTS);
    let Some(total) = total else {
        return Err(RepSetError::TooLarge(format!("t·s = {}·{}", p.t, p.s)));
    };
    let w = p.color_bits() as usize;
    let mut out = Vec::with_capacity(HEADER_LEN + (total as usize * w).div_ceil(8));
    out.extend_from_slice(FAMILY_MAGIC);
    out.push(FAMILY_VERSION);
    out.extend_from_slice(&p.k.to_le_bytes());
    out.extend_from_slice(&p.s.to_le_bytes());
    out.extend_from_slice(&p.t.to_le_bytes());
    for x in [p.alpha, p.delta, p.nu] {
        out.extend_from_slice(&x.to_le_bytes());
    }
    let mut body: BitVec<u8, Lsb0> = BitVec::with_capacity(total as usize * w);
    for i in 0..p.t {
        for &c in f.get_set(i)?.iter() {
            let at = body.len();
            body.resize(at + w, false);
            body[at..].store_le(c);
        }
    }
    out.extend_from_slice(body.as_raw_slice());
    Ok(out)
}

pub fn decode_family(bytes: &[u8]) -> Result<RepFamily, RepSetError> {
    let err = |m: String| RepSetError::Decode(m);
    if bytes.len() < HEADER_LEN {
        return Err(err(format!("{} bytes, header needs {HEADER_LEN}", bytes.len())));
    }
    if &bytes[..4] != FAMILY_MAGIC {
        return Err(err("bad magic".into()));
    }
    if bytes[4] != FAMILY_VERSION {
        return Err(err(format!("unsupported version {}", bytes[4])));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let k = u32_at(5);
    let s = u32_at(9);
    let t = u64_at(13);
    let [alpha, delta, nu] = [21, 29, 37].map(|o| f64::from_bits(u64_at(o)));
    let params = RepFamilyParams::custom(k, s, t, alpha, delta, nu).map_err(|e| err(e.to_string()))?;
    let total = t
        .checked_mul(s as u64)
        .filter(|&x| x <= MAX_ELEMENTS)
        .ok_or_else(|| err(format!("t·s = {t}·{s} too large")))?;
    let w = params.color_bits() as u64;
    let body = &bytes[HEADER_LEN..];
    let need = (total * w).div_ceil(8);
    if body.len() as u64 != need {
        return Err(err(format!("body is {} bytes, expected {need}", body.len())));
    }
    let bits = body.view_bits::<Lsb0>();
    if bits[(total * w) as usize..].any() {
        return Err(err("nonzero padding".into()));
    }
    let w = w as usize;
    let mut flat = Vec::with_capacity(total as usize);
    for chunk in bits[..total as usize * w].chunks_exact(w) {
        flat.push(chunk.load_le::<u32>());
    }
    for (i, set) in flat.chunks_exact(s as usize).enumerate() {
        validate_set(set, &params).map_err(|e| err(format!("set {i}: {e}")))?;
    }
    Ok(RepFamily::from_flat(params, flat))
}

pub fn write_family(f: &RepFamily, path: impl AsRef<Path>) -> Result<(), RepSetError> {
    std::fs::write(path, encode_family(f)?).map_err(|e| RepSetError::Io(e.to_string()))
}

pub fn read_family(path: impl AsRef<Path>) -> Result<RepFamily, RepSetError> {
    let bytes = std::fs::read(path).map_err(|e| RepSetError::Io(e.to_string()))?;
    decode_family(&bytes)
}
