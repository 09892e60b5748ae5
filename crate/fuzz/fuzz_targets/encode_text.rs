#![no_main]
use libfuzzer_sys::fuzz_target;
use std::sync::OnceLock;
use vernqa_core::textpipe::{build_vocab, encode_text, Vocabulary};

fn vocab() -> &'static Vocabulary {
    static V: OnceLock<Vocabulary> = OnceLock::new();
    V.get_or_init(|| build_vocab(&vernqa_core::synth::templated_corpus(16), 8192, 1))
}

fuzz_target!(|data: &[u8]| {
    let Some((&len, rest)) = data.split_first() else {
        return;
    };
    let Ok(text) = std::str::from_utf8(rest) else {
        return;
    };
    let max_len = len as usize % 64 + 2;
    let seq = encode_text(vocab(), text, max_len);
    assert_eq!(seq.ids.len(), max_len);
    assert!(seq.true_len >= 2 && seq.true_len <= max_len);
    assert!(seq.ids[seq.true_len..]
        .iter()
        .all(|&id| id == vernqa_core::textpipe::PAD_ID));
});
