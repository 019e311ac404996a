#![no_main]

use libfuzzer_sys::fuzz_target;
use pibgen::frame::{load_frame, ColumnMapping, OutcomeSupport};

fuzz_target!(|data: &[u8]| {
    if let Ok(frame) = load_frame(data, &ColumnMapping::default(), OutcomeSupport::BINARY) {
        assert!(frame.n_sampled() <= frame.len());
    }
});
