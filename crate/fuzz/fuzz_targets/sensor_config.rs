#![no_main]

use libfuzzer_sys::fuzz_target;
use specmon_core::sensor::SensorConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(c) = SensorConfig::parse(text) {
            let _ = c.scan_state();
        }
    }
});
