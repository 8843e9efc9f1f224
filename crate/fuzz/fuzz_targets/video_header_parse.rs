#![no_main]
use libfuzzer_sys::fuzz_target;
use zae_core::formats::{decode_video_header, encode_video_header};

fuzz_target!(|text: &str| {
    if let Ok(h) = decode_video_header(text) {
        let again = decode_video_header(&encode_video_header(&h)).unwrap();
        assert_eq!(encode_video_header(&again), encode_video_header(&h));
    }
});
