#![no_main]

use launder_core::degradations::PostProcOp;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|name: &str| {
    if let Ok(op) = name.parse::<PostProcOp>() {
        op.validate().unwrap();
        assert_eq!(op.to_string().parse::<PostProcOp>().unwrap(), op);
    }
});
