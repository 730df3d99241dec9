#![no_main]

use launder_core::scorers::protocol::{format_score, parse_handshake, parse_score_line};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|line: &str| {
    let _ = parse_handshake(line);
    if let Ok(v) = parse_score_line(line) {
        assert!(v.is_finite());
        assert_eq!(parse_score_line(&format_score(v)).unwrap().to_bits(), v.to_bits());
    }
});
