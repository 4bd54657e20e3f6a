//! Representative families: `t` subsets of size `s` of the color universe
//! `[k]` such that a random member meets every large color set roughly in
//! proportion, no small set is over-represented, and every color is covered
//! about equally often.

mod check;
mod io;

pub use check::{build_explicit_family, check_family, standard_probes, CheckReport, ElementCheck, ProbeCheck};
pub use io::{decode_family, encode_family, read_family, write_family, FAMILY_MAGIC, FAMILY_VERSION};

use std::borrow::Cow;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RepSetError {
    #[error("invalid family parameters: {0}")]
    InvalidParams(String),
    #[error("universe too small: set size {s} exceeds universe {k}")]
    UniverseTooSmall { s: u64, k: u32 },
    #[error("family too large to index: {0}")]
    TooLarge(String),
    #[error("set index {i} out of range for family of {t} sets")]
    IndexOutOfRange { i: u64, t: u64 },
    #[error("malformed family file: {0}")]
    Decode(String),
    #[error("no verified family after {attempts} attempts")]
    ConstructionFailed { attempts: u32 },
    #[error("i/o error: {0}")]
    Io(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepFamilyParams {
    pub k: u32,
    pub alpha: f64,
    pub delta: f64,
    pub nu: f64,
    pub s: u32,
    pub t: u64,
}

fn check_unit(name: &str, x: f64) -> Result<(), RepSetError> {
    if !(x > 0.0 && x < 1.0) {
        return Err(RepSetError::InvalidParams(format!("{name} = {x} not in (0, 1)")));
    }
    Ok(())
}

/// Set size and family size sufficient for the probabilistic construction:
/// `s = ⌈3 ln(4/ν) / (α²δ)⌉` and `t` the larger of
/// `⌈3(k ln 2 + 1) exp(α²δs/3)⌉` and `⌈3k(ln(2k) + 1) / (α²s)⌉`.
pub fn family_params(k: u32, alpha: f64, delta: f64, nu: f64) -> Result<RepFamilyParams, RepSetError> {
    check_unit("alpha", alpha)?;
    check_unit("delta", delta)?;
    check_unit("nu", nu)?;
    if k == 0 {
        return Err(RepSetError::InvalidParams("empty universe".into()));
    }
    let a2 = alpha * alpha;
    let s = (3.0 * (4.0 / nu).ln() / (a2 * delta)).ceil();
    if s > k as f64 {
        return Err(RepSetError::UniverseTooSmall { s: s.min(u64::MAX as f64) as u64, k });
    }
    let s = s as u32;
    let kf = k as f64;
    let cover = (3.0 * (kf * std::f64::consts::LN_2 + 1.0) * (a2 * delta * s as f64 / 3.0).exp()).ceil();
    let spread = (3.0 * kf * ((2.0 * kf).ln() + 1.0) / (a2 * s as f64)).ceil();
    let t = cover.max(spread);
    if !t.is_finite() || t >= u64::MAX as f64 {
        return Err(RepSetError::TooLarge(format!("t = {t:e}")));
    }
    Ok(RepFamilyParams { k, alpha, delta, nu, s, t: t as u64 })
}

impl RepFamilyParams {
    /// Parameters with explicitly chosen `s` and `t`, e.g. for fixtures.
    pub fn custom(k: u32, s: u32, t: u64, alpha: f64, delta: f64, nu: f64) -> Result<Self, RepSetError> {
        check_unit("alpha", alpha)?;
        check_unit("delta", delta)?;
        check_unit("nu", nu)?;
        if k == 0 || s == 0 || t == 0 {
            return Err(RepSetError::InvalidParams(format!("k = {k}, s = {s}, t = {t} must be positive")));
        }
        if s > k {
            return Err(RepSetError::UniverseTooSmall { s: s as u64, k });
        }
        Ok(RepFamilyParams { k, alpha, delta, nu, s, t })
    }

    /// Bits of a set index on the wire; 0 when there is a single set.
    pub fn index_bits(&self) -> u32 {
        crate::sim::ceil_log2(self.t)
    }

    /// Bits of a position inside a set.
    pub fn pos_bits(&self) -> u32 {
        crate::sim::ceil_log2(self.s as u64).max(1)
    }

    /// Bits of a color value.
    pub fn color_bits(&self) -> u32 {
        crate::sim::ceil_log2(self.k as u64).max(1)
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Backing {
    /// `t` sorted sets of `s` elements, concatenated.
    Explicit(Vec<u32>),
    /// Set `i` is drawn from a ChaCha stream selected by `i`.
    Implicit { seed: u64 },
    /// The single set `[k]`, kept materialized.
    Whole(Vec<u32>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RepFamily {
    params: RepFamilyParams,
    backing: Backing,
}

impl RepFamily {
    pub fn implicit(params: RepFamilyParams, seed: u64) -> Self {
        RepFamily { params, backing: Backing::Implicit { seed } }
    }

    /// One set equal to the whole universe. Meets every proportionality
    /// requirement exactly.
    pub fn whole_universe(k: u32, alpha: f64, delta: f64, nu: f64) -> Result<Self, RepSetError> {
        let params = RepFamilyParams::custom(k, k, 1, alpha, delta, nu)?;
        Ok(RepFamily { params, backing: Backing::Whole((0..k).collect()) })
    }

    /// Materialized family; each set is sorted and deduplicated-checked.
    pub fn explicit(params: RepFamilyParams, sets: Vec<Vec<u32>>) -> Result<Self, RepSetError> {
        if sets.len() as u64 != params.t {
            return Err(RepSetError::InvalidParams(format!("{} sets given, t = {}", sets.len(), params.t)));
        }
        let mut flat = Vec::with_capacity(sets.len() * params.s as usize);
        for (i, mut set) in sets.into_iter().enumerate() {
            set.sort_unstable();
            validate_set(&set, &params).map_err(|e| RepSetError::InvalidParams(format!("set {i}: {e}")))?;
            flat.extend(set);
        }
        Ok(RepFamily { params, backing: Backing::Explicit(flat) })
    }

    /// Materializes every set of `params` from the keyed generator.
    pub fn materialize(params: RepFamilyParams, seed: u64) -> Self {
        use rayon::prelude::*;
        let s = params.s as usize;
        let mut flat = vec![0u32; params.t as usize * s];
        flat.par_chunks_mut(s)
            .enumerate()
            .for_each(|(i, out)| out.copy_from_slice(&keyed_set(&params, seed, i as u64)));
        RepFamily { params, backing: Backing::Explicit(flat) }
    }

    pub(crate) fn from_flat(params: RepFamilyParams, flat: Vec<u32>) -> Self {
        RepFamily { params, backing: Backing::Explicit(flat) }
    }

    pub fn params(&self) -> &RepFamilyParams {
        &self.params
    }

    pub fn is_explicit(&self) -> bool {
        matches!(self.backing, Backing::Explicit(_))
    }

    /// True for the single-set `[k]` family.
    pub fn is_whole_universe(&self) -> bool {
        matches!(self.backing, Backing::Whole(_))
    }

    /// The `i`-th set, sorted ascending.
    pub fn get_set(&self, i: u64) -> Result<Cow<'_, [u32]>, RepSetError> {
        let p = &self.params;
        if i >= p.t {
            return Err(RepSetError::IndexOutOfRange { i, t: p.t });
        }
        Ok(match &self.backing {
            Backing::Explicit(flat) => {
                let s = p.s as usize;
                let i = i as usize;
                Cow::Borrowed(&flat[i * s..(i + 1) * s])
            }
            Backing::Implicit { seed } => Cow::Owned(keyed_set(p, *seed, i)),
            Backing::Whole(all) => Cow::Borrowed(all),
        })
    }

    /// Uniform set index.
    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        if self.params.t == 1 {
            0
        } else {
            rng.gen_range(0..self.params.t)
        }
    }
}

fn validate_set(set: &[u32], p: &RepFamilyParams) -> Result<(), String> {
    if set.len() != p.s as usize {
        return Err(format!("size {} != s = {}", set.len(), p.s));
    }
    if let Some(&c) = set.iter().find(|&&c| c >= p.k) {
        return Err(format!("element {c} outside universe of {}", p.k));
    }
    if set.windows(2).any(|w| w[0] >= w[1]) {
        return Err("elements not strictly increasing".into());
    }
    Ok(())
}

/// `s` distinct elements of `[k]` from the stream `(seed, i)`, sorted.
fn keyed_set(p: &RepFamilyParams, seed: u64, i: u64) -> Vec<u32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i);
    let mut set: Vec<u32> = index::sample(&mut rng, p.k as usize, p.s as usize)
        .into_iter()
        .map(|c| c as u32)
        .collect();
    set.sort_unstable();
    set
}
