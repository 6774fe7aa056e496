#![no_main]

use libfuzzer_sys::fuzz_target;
use tmdmap::sparse::read_matrix_market;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(m) = read_matrix_market(text) {
        let mut buf = Vec::new();
        m.write_matrix_market(&mut buf).expect("write to memory");
        let back = read_matrix_market(std::str::from_utf8(&buf).unwrap()).expect("re-parse of written matrix");
        assert_eq!(back.nnz(), m.nnz());
    }
});
