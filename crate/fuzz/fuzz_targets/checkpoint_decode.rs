#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = vernqa_core::trainer::decode_checkpoint(data);
});
