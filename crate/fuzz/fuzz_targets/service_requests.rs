#![no_main]
use libfuzzer_sys::fuzz_target;
use vernqa_service::routes::{AskRequest, StoreEhrRequest, SummarizeRequest};

fuzz_target!(|data: &[u8]| {
    let _ = serde_json::from_slice::<AskRequest>(data);
    let _ = serde_json::from_slice::<SummarizeRequest>(data);
    let _ = serde_json::from_slice::<StoreEhrRequest>(data);
});
