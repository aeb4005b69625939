#![no_main]

use libfuzzer_sys::fuzz_target;
use specmon_core::control::{Ack, Command, StatusMessage};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(c) = Command::parse(text) {
        assert_eq!(Command::parse(&c.to_payload()).unwrap(), c);
    }
    if let Ok(a) = Ack::parse(text) {
        let _ = Ack::parse(&a.to_payload()).unwrap();
    }
    if let Ok(s) = StatusMessage::parse(text) {
        assert_eq!(StatusMessage::parse(&s.to_payload()).unwrap(), s);
    }
});
