#![no_main]

use libfuzzer_sys::fuzz_target;
use specmon_core::platform::PlatformConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = PlatformConfig::parse(text);
    }
});
