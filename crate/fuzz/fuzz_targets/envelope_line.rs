#![no_main]

use libfuzzer_sys::fuzz_target;
use specmon_core::envelope::Envelope;

fuzz_target!(|data: &[u8]| {
    if let Ok(env) = Envelope::parse_line(data) {
        let again = Envelope::parse_line(env.to_line().as_bytes()).expect("re-parse");
        assert_eq!(env.key(), again.key());
        let _ = env.to_segment();
        let _ = env.to_iq().and_then(|m| m.decode());
    }
});
