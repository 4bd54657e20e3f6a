//! Bit payloads and their per-round fragments.

use bitvec::prelude::*;

/// A message body with exact bit length.
pub type Payload = BitVec<u64, Lsb0>;

/// `⌈log₂ x⌉`, with `ceil_log2(0) = ceil_log2(1) = 0`.
pub fn ceil_log2(x: u64) -> u32 {
    if x <= 1 {
        0
    } else {
        64 - (x - 1).leading_zeros()
    }
}

/// Appends the low `width` bits of `value`, least significant first.
pub fn push_bits(out: &mut Payload, value: u64, width: u32) {
    if width == 0 {
        return;
    }
    debug_assert!(width == 64 || value >> width == 0, "{value} does not fit {width} bits");
    let start = out.len();
    out.resize(start + width as usize, false);
    out[start..].store_le(value);
}

/// Reads `width` bits starting at `*pos` and advances `*pos`. Missing bits
/// read as zero.
pub fn read_bits(src: &BitSlice<u64, Lsb0>, pos: &mut usize, width: u32) -> u64 {
    if width == 0 {
        return 0;
    }
    let start = (*pos).min(src.len());
    let end = (*pos + width as usize).min(src.len());
    *pos += width as usize;
    if start == end {
        0
    } else {
        src[start..end].load_le::<u64>()
    }
}

/// Splits `payload` into `⌈len/B⌉` consecutive frames of at most `B` bits.
/// An empty payload still yields one empty frame so that its presence is
/// observable.
pub fn fragment(payload: &BitSlice<u64, Lsb0>, bandwidth: usize) -> Vec<Payload> {
    assert!(bandwidth >= 1);
    if payload.is_empty() {
        return vec![Payload::new()];
    }
    payload.chunks(bandwidth).map(|c| c.to_bitvec()).collect()
}

/// Rounds needed to ship `bits` bits at `bandwidth` bits per round.
pub fn rounds_for(bits: usize, bandwidth: usize) -> u32 {
    bits.div_ceil(bandwidth) as u32
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fragment_examples() {
        let p: Payload = bitvec![u64, Lsb0; 1; 12];
        assert_eq!(fragment(&p, 12).len(), 1);
        let p: Payload = bitvec![u64, Lsb0; 1; 25];
        let lens: Vec<_> = fragment(&p, 12).iter().map(|f| f.len()).collect();
        assert_eq!(lens, vec![12, 12, 1]);
    }

    #[test]
    fn ceil_log2_values() {
        assert_eq!(
            [0, 1, 2, 3, 4, 5, 1024, 1025].map(ceil_log2),
            [0, 0, 1, 2, 2, 3, 10, 11]
        );
    }

    proptest! {
        #[test]
        fn fragments_concatenate(bits in proptest::collection::vec(any::<bool>(), 1..300), b in 1usize..70) {
            let p: Payload = bits.iter().copied().collect();
            let frames = fragment(&p, b);
            prop_assert_eq!(frames.len(), p.len().div_ceil(b));
            prop_assert!(frames.iter().all(|f| f.len() <= b));
            let mut joined = Payload::new();
            for f in &frames {
                joined.extend_from_bitslice(f);
            }
            prop_assert_eq!(joined, p);
        }

        #[test]
        fn bit_fields_round_trip(fields in proptest::collection::vec((any::<u64>(), 0u32..=64), 0..20)) {
            let mut p = Payload::new();
            let fields: Vec<(u64, u32)> = fields
                .into_iter()
                .map(|(v, w)| (if w == 64 { v } else if w == 0 { 0 } else { v & ((1 << w) - 1) }, w))
                .collect();
            for &(v, w) in &fields {
                push_bits(&mut p, v, w);
            }
            let mut pos = 0;
            for &(v, w) in &fields {
                prop_assert_eq!(read_bits(&p, &mut pos, w), v);
            }
            prop_assert_eq!(pos, p.len());
        }
    }
}
