#![no_main]

use congest_color::repset::{decode_family, encode_family};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(f) = decode_family(data) {
        let p = *f.params();
        for i in 0..p.t.min(4) {
            let set = f.get_set(i).unwrap();
            assert_eq!(set.len(), p.s as usize);
            assert!(set.windows(2).all(|w| w[0] < w[1]) && set.iter().all(|&c| c < p.k));
        }
        assert_eq!(encode_family(&f).unwrap(), data);
    }
});
