#![no_main]

use launder_core::DatasetManifest;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(m) = DatasetManifest::parse(data, "/fuzz") else {
        return;
    };
    // a parsed manifest must survive a write/parse round trip
    let mut out = Vec::new();
    m.write_csv(&mut out).unwrap();
    let again = DatasetManifest::parse(out.as_slice(), "/fuzz").unwrap();
    assert_eq!(m.entries(), again.entries());
});
