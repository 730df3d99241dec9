#![no_main]

use launder_core::scorers::ScorerModel;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    if let Ok(m) = ScorerModel::from_json(text) {
        let again = ScorerModel::from_json(&m.to_json()).unwrap();
        assert_eq!(again, m);
    }
});
