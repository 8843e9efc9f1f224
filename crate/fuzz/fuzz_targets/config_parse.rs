#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    if let Ok(pairs) = zae_core::config::parse_key_values(text) {
        for (k, _) in pairs {
            assert!(!k.is_empty());
        }
    }
});
