#![no_main]

use libfuzzer_sys::fuzz_target;
use tmdmap::cloud::{parse_point_reader, parse_point_table};

fuzz_target!(|data: &[u8]| {
    let _ = parse_point_reader(data);
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(table) = parse_point_table(text) {
            let again = parse_point_table(&table.cloud.to_csv_string()).expect("re-parse of written cloud");
            assert_eq!(again.cloud, table.cloud);
        }
    }
});
