#![no_main]

use libfuzzer_sys::fuzz_target;
use specmon_core::serving::QuerySpec;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(q) = QuerySpec::from_query(text) {
            assert_eq!(QuerySpec::from_query(&q.to_query()).unwrap(), q);
        }
    }
});
