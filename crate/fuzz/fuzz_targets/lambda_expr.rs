#![no_main]

use libfuzzer_sys::fuzz_target;
use pibgen::lambda::LambdaSpec;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(spec) = LambdaSpec::parse(text) {
        let again = LambdaSpec::parse(&spec.to_string()).expect("canonical form parses");
        assert_eq!(spec.to_string(), again.to_string());
    }
});
