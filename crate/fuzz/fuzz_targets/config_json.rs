#![no_main]

use libfuzzer_sys::fuzz_target;
use pibgen::config::AnalysisConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(config) = AnalysisConfig::from_json(text) {
        let _ = config.outcome_support();
    }
});
