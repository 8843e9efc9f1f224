#![no_main]
use libfuzzer_sys::fuzz_target;
use zae_core::formats::{decode_transform, encode_transform};

fuzz_target!(|data: &[u8]| {
    if let Ok(t) = decode_transform(data) {
        assert_eq!(encode_transform(&t).unwrap(), data);
    }
});
