#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(set) = zae_core::datasets::parse_cifar10(data) {
        assert_eq!(set.len() * 3073, data.len());
    }
});
