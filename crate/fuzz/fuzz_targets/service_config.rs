#![no_main]
use libfuzzer_sys::fuzz_target;
use vernqa_service::ServiceConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = ServiceConfig::from_toml(text) {
            let _ = cfg.validate();
        }
        let _ = ServiceConfig::from_json(text);
    }
});
