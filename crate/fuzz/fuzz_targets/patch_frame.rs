#![no_main]

use launder_core::scorers::protocol::{encode_patch_frame, read_patch_frame};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let mut reader = data;
    while let Ok(Some(img)) = read_patch_frame(&mut reader) {
        let frame = encode_patch_frame(&img);
        let back = read_patch_frame(&mut frame.as_slice()).unwrap().unwrap();
        assert_eq!(back, img);
    }
});
