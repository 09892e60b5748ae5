#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(line) = std::str::from_utf8(data) {
        let _ = vernqa_core::corpus::parse_record(line);
        let _ = vernqa_core::corpus::Corpus::parse("fuzz", line);
    }
});
