#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let set = vernqa_core::summarizer::split_sentences(text);
        for (i, s) in set.sentences.iter().enumerate() {
            assert_eq!(s.position, i);
        }
    }
});
