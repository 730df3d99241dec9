#![no_main]

use launder_core::pipeline::PipelineConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    if let Ok(cfg) = serde_json::from_str::<PipelineConfig>(text) {
        let _ = cfg.validate();
    }
});
