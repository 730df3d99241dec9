#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(img) = launder_core::imaging::decode_image(data) {
        assert_eq!(img.bytes().len(), img.width() * img.height() * img.channels());
    }
});
