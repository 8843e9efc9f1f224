#![no_main]
use libfuzzer_sys::fuzz_target;
use zae_core::formats::{decode_matrix, encode_matrix};

// Decoding rejects trailing bytes, so a successful decode must re-encode exactly.
fuzz_target!(|data: &[u8]| {
    if let Ok(x) = decode_matrix(data) {
        assert_eq!(encode_matrix(&x), data);
    }
});
