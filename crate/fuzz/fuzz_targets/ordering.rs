#![no_main]

use libfuzzer_sys::fuzz_target;
use symamg::sparse::invert_permutation;
use symamg::sparse::mmio::parse_ordering;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(perm) = parse_ordering(text) {
        let inv = invert_permutation(&perm).expect("parsed orderings are permutations");
        assert!(inv.iter().enumerate().all(|(i, &p)| perm[p] == i));
    }
});
