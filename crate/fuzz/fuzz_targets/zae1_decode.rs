#![no_main]
use libfuzzer_sys::fuzz_target;
use zae_core::formats::{decode_model, encode_model};

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = decode_model(data) {
        let again = decode_model(&encode_model(&m).unwrap()).unwrap();
        assert_eq!(encode_model(&again).unwrap(), encode_model(&m).unwrap());
    }
});
