#![no_main]

use libfuzzer_sys::fuzz_target;
use pibgen::propensity::PropensityModel;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(model) = PropensityModel::from_json(text) {
        assert_eq!(PropensityModel::from_json(&model.to_json()).unwrap(), model);
    }
});
