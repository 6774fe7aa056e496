#![no_main]

use libfuzzer_sys::fuzz_target;
use tmdmap::experiments::config::Manifest;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(m) = Manifest::parse(text) {
        let _ = m.config();
        let _ = Manifest::parse(&m.to_json()).expect("re-parse of written manifest");
    }
});
