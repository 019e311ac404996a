#![no_main]

use libfuzzer_sys::fuzz_target;
use pibgen::frame::{load_two_files, ColumnMapping, OutcomeSupport};

// Input is the sample file, a NUL byte, then the population file.
fuzz_target!(|data: &[u8]| {
    let split = data.iter().position(|&b| b == 0).unwrap_or(data.len());
    let (sample, rest) = data.split_at(split);
    let population = rest.get(1..).unwrap_or(&[]);
    let _ = load_two_files(sample, population, &ColumnMapping::default(), OutcomeSupport::BINARY);
});
