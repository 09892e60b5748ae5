#![no_main]
use libfuzzer_sys::fuzz_target;
use vernqa_core::langbridge::DictionaryTranslator;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(dict) = DictionaryTranslator::parse_tsv(text) {
            let _ = dict.inverted();
        }
    }
});
