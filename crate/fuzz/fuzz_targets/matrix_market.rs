#![no_main]

use libfuzzer_sys::fuzz_target;
use symamg::sparse::mmio::{parse_matrix_market, write_matrix_market, Symmetry};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(a) = parse_matrix_market(text) else { return };
    // Duplicate entries are summed and may overflow.
    if !a.max_abs().is_finite() {
        return;
    }
    let mut buf = Vec::new();
    write_matrix_market(&mut buf, &a, Symmetry::General).unwrap();
    let back = parse_matrix_market(std::str::from_utf8(&buf).unwrap()).unwrap();
    assert_eq!(back.n_rows(), a.n_rows());
    assert_eq!(back.n_cols(), a.n_cols());
    assert_eq!(back.nnz(), a.nnz());
});
