//! Monte-Carlo verification of the three family properties.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{RepFamily, RepFamilyParams, RepSetError};
use crate::sim::derive_seed;

/// Outcome for one probe set `T`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeCheck {
    pub kind: String,
    pub size: u32,
    /// `|T| >= δk`: intersections must be proportional; otherwise they must
    /// stay below `(1+α)δs`.
    pub large: bool,
    pub sets_checked: u64,
    pub unusual: u64,
    pub fraction: f64,
    pub pass: bool,
}

/// Per-color coverage counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElementCheck {
    /// Counted over every set rather than a sample.
    pub exact: bool,
    pub sets_counted: u64,
    pub expected: f64,
    pub lower: f64,
    pub upper: f64,
    /// Extra slack on each side when counts are sampled (4 standard
    /// deviations); 0 when exact.
    pub sampling_margin: f64,
    pub min_count: u64,
    pub max_count: u64,
    pub failing: Vec<u32>,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub params: RepFamilyParams,
    pub probes: Vec<ProbeCheck>,
    pub elements: ElementCheck,
    pub worst_fraction: f64,
    pub pass: bool,
}

/// `per_class` uniform subsets of each size `⌈δk⌉, k/4, k/2, 3k/4, k`.
pub fn standard_probes(k: u32, delta: f64, per_class: usize, seed: u64) -> Vec<Vec<u32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let small = ((delta * k as f64).ceil() as u32).min(k);
    let mut out = Vec::with_capacity(5 * per_class);
    for size in [small, k / 4, k / 2, 3 * k / 4, k] {
        for _ in 0..per_class {
            out.push(random_subset(&mut rng, k, size));
        }
    }
    out
}

fn random_subset(rng: &mut ChaCha8Rng, k: u32, size: u32) -> Vec<u32> {
    index::sample(rng, k as usize, size as usize)
        .into_iter()
        .map(|c| c as u32)
        .collect()
}

/// Checks the family against `samples` plus built-in adversarial probes
/// (complement of the first set, union of the first two, random sets of size
/// `⌈δk⌉` and `⌈δk⌉ − 1`). Implicit families are checked on `probe_count`
/// randomly drawn member sets; materialized ones on all of them.
pub fn check_family(
    f: &RepFamily,
    samples: &[Vec<u32>],
    probe_count: usize,
    seed: u64,
) -> Result<CheckReport, RepSetError> {
    if samples.is_empty() {
        return Err(RepSetError::InvalidParams("no probe sets supplied".into()));
    }
    let p = *f.params();
    let k = p.k;
    let words = (k as usize).div_ceil(64);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xC4EC));

    let indices: Vec<u64> = if f.is_explicit() || f.is_whole_universe() {
        (0..p.t).collect()
    } else {
        if probe_count == 0 {
            return Err(RepSetError::InvalidParams("implicit family needs probe_count >= 1".into()));
        }
        (0..probe_count).map(|_| f.sample_index(&mut rng)).collect()
    };
    let mut rows = vec![0u64; indices.len() * words];
    rows.par_chunks_mut(words).zip(indices.par_iter()).for_each(|(row, &i)| {
        for &c in f.get_set(i).expect("index in range").iter() {
            row[c as usize / 64] |= 1 << (c % 64);
        }
    });

    let mut probes: Vec<(String, Vec<u64>)> = Vec::new();
    for t in samples {
        probes.push(("sample".into(), to_bits(t, k, words)?));
    }
    let first = &rows[..words];
    let mut complement: Vec<u64> = first.iter().map(|w| !w).collect();
    clear_tail(&mut complement, k);
    probes.push(("complement_of_first".into(), complement));
    if indices.len() >= 2 {
        let union = first.iter().zip(&rows[words..2 * words]).map(|(a, b)| a | b).collect();
        probes.push(("union_of_first_two".into(), union));
    }
    let dense = ((p.delta * k as f64).ceil() as u32).min(k);
    for _ in 0..8 {
        let t = random_subset(&mut rng, k, dense);
        probes.push(("random_threshold".into(), to_bits(&t, k, words)?));
        if dense >= 1 {
            let t = random_subset(&mut rng, k, dense - 1);
            probes.push(("random_below_threshold".into(), to_bits(&t, k, words)?));
        }
    }

    let s = p.s as f64;
    let kf = k as f64;
    let checked: Vec<ProbeCheck> = probes
        .into_par_iter()
        .map(|(kind, tbits)| {
            let size: u32 = tbits.iter().map(|w| w.count_ones()).sum();
            let large = size as f64 >= p.delta * kf;
            let (lo, hi) = if large {
                let mid = size as f64 * s / kf;
                ((1.0 - p.alpha) * mid, (1.0 + p.alpha) * mid)
            } else {
                (f64::NEG_INFINITY, (1.0 + p.alpha) * p.delta * s)
            };
            let unusual = intersection_counts(&rows, words, &tbits)
                .into_iter()
                .filter(|&c| (c as f64) < lo || (c as f64) > hi)
                .count() as u64;
            let n = indices.len() as u64;
            let fraction = unusual as f64 / n as f64;
            ProbeCheck { kind, size, large, sets_checked: n, unusual, fraction, pass: fraction <= p.nu }
        })
        .collect();

    let elements = element_check(&p, &rows, words, indices.len() as u64, f.is_explicit() || f.is_whole_universe());
    let worst_fraction = checked.iter().map(|c| c.fraction).fold(0.0, f64::max);
    let pass = elements.pass && checked.iter().all(|c| c.pass);
    Ok(CheckReport { params: p, probes: checked, elements, worst_fraction, pass })
}

fn element_check(p: &RepFamilyParams, rows: &[u64], words: usize, sets: u64, exact: bool) -> ElementCheck {
    let mut count = vec![0u64; p.k as usize];
    for row in rows.chunks(words) {
        for (w, &bits) in row.iter().enumerate() {
            let mut b = bits;
            while b != 0 {
                count[w * 64 + b.trailing_zeros() as usize] += 1;
                b &= b - 1;
            }
        }
    }
    let frac = p.s as f64 / p.k as f64;
    let expected = sets as f64 * frac;
    let margin = if exact { 0.0 } else { 4.0 * (sets as f64 * frac * (1.0 - frac)).sqrt() };
    let lower = (1.0 - p.alpha) * expected;
    let upper = (1.0 + p.alpha) * expected;
    let failing: Vec<u32> = (0..p.k)
        .filter(|&u| {
            let c = count[u as usize] as f64;
            c < lower - margin || c > upper + margin
        })
        .collect();
    ElementCheck {
        exact,
        sets_counted: sets,
        expected,
        lower,
        upper,
        sampling_margin: margin,
        min_count: count.iter().copied().min().unwrap_or(0),
        max_count: count.iter().copied().max().unwrap_or(0),
        pass: failing.is_empty(),
        failing,
    }
}

fn to_bits(t: &[u32], k: u32, words: usize) -> Result<Vec<u64>, RepSetError> {
    let mut bits = vec![0u64; words];
    for &c in t {
        if c >= k {
            return Err(RepSetError::InvalidParams(format!("probe element {c} outside universe of {k}")));
        }
        bits[c as usize / 64] |= 1 << (c % 64);
    }
    Ok(bits)
}

fn clear_tail(bits: &mut [u64], k: u32) {
    let r = k % 64;
    if r != 0 {
        if let Some(last) = bits.last_mut() {
            *last &= (1u64 << r) - 1;
        }
    }
}

fn intersection_counts(rows: &[u64], words: usize, t: &[u64]) -> Vec<u32> {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("popcnt") {
        // SAFETY: the feature was detected at run time.
        return unsafe { intersection_counts_popcnt(rows, words, t) };
    }
    intersection_counts_plain(rows, words, t)
}

#[inline(always)]
fn intersection_counts_plain(rows: &[u64], words: usize, t: &[u64]) -> Vec<u32> {
    rows.chunks(words)
        .map(|row| row.iter().zip(t).map(|(a, b)| (a & b).count_ones()).sum())
        .collect()
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "popcnt")]
unsafe fn intersection_counts_popcnt(rows: &[u64], words: usize, t: &[u64]) -> Vec<u32> {
    intersection_counts_plain(rows, words, t)
}

/// Draws fresh families from `seed` until one passes [`check_family`] on
/// 100 standard probes per size class.
pub fn build_explicit_family(
    params: RepFamilyParams,
    seed: u64,
    max_attempts: u32,
) -> Result<RepFamily, RepSetError> {
    if max_attempts == 0 {
        return Err(RepSetError::InvalidParams("max_attempts must be >= 1".into()));
    }
    for attempt in 0..max_attempts {
        let fseed = derive_seed(seed, attempt as u64);
        let family = RepFamily::materialize(params, fseed);
        let probes = standard_probes(params.k, params.delta, 100, derive_seed(fseed, 1));
        if check_family(&family, &probes, 0, fseed)?.pass {
            return Ok(family);
        }
    }
    Err(RepSetError::ConstructionFailed { attempts: max_attempts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::repset::family_params;

    #[test]
    fn identical_sets_fail_on_complement() {
        let p = RepFamilyParams::custom(64, 16, 10, 0.5, 0.125, 0.125).unwrap();
        let f = RepFamily::explicit(p, vec![(0..16).collect(); 10]).unwrap();
        let full: Vec<u32> = (0..64).collect();
        let r = check_family(&f, &[full], 0, 1).unwrap();
        assert!(!r.pass);
        let comp = r.probes.iter().find(|c| c.kind == "complement_of_first").unwrap();
        assert_eq!((comp.fraction, comp.size, comp.large), (1.0, 48, true));
        // The whole universe is met in full by every set.
        assert!(r.probes[0].pass && r.probes[0].unusual == 0);
    }

    #[test]
    fn empty_probe_takes_small_path() {
        let f = RepFamily::whole_universe(32, 0.5, 0.125, 0.125).unwrap();
        let r = check_family(&f, &[vec![], (0..32).collect()], 0, 0).unwrap();
        assert!(!r.probes[0].large && r.probes[0].pass);
        assert!(r.pass, "{r:?}");
        assert!(check_family(&f, &[], 0, 0).is_err());
        assert!(check_family(&f, &[vec![40]], 0, 0).is_err());
    }

    #[test]
    fn single_random_set_is_rejected() {
        let p = RepFamilyParams::custom(1024, 333, 1, 0.5, 0.125, 0.125).unwrap();
        let f = RepFamily::materialize(p, 3);
        let r = check_family(&f, &standard_probes(1024, 0.125, 10, 0), 0, 0).unwrap();
        assert!(!r.pass);
    }

    #[test]
    fn implicit_family_passes_sampled_check() {
        let p = family_params(512, 0.5, 0.125, 0.125).unwrap();
        let f = RepFamily::implicit(p, 11);
        let r = check_family(&f, &standard_probes(512, 0.125, 20, 5), 4000, 2).unwrap();
        assert!(!r.elements.exact);
        assert!(r.pass, "worst {}", r.worst_fraction);
    }

    #[test]
    fn built_family_passes() {
        let p = family_params(512, 0.5, 0.125, 0.125).unwrap();
        let f = build_explicit_family(p, 1, 3).unwrap();
        assert!(f.is_explicit());
        let r = check_family(&f, &standard_probes(512, 0.125, 30, 9), 0, 0).unwrap();
        assert!(r.pass && r.elements.exact);
    }
}
