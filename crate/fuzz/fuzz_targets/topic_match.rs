#![no_main]

use libfuzzer_sys::fuzz_target;
use specmon_core::control::topic_matches;

// `pattern \0 topic`
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let (pattern, topic) = text.split_once('\0').unwrap_or((text, text));
    let _ = topic_matches(pattern, topic);
    if !topic.contains(['+', '#']) {
        assert!(topic_matches(topic, topic));
    }
});
