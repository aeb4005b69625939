#![no_main]

use libfuzzer_sys::fuzz_target;
use specmon_core::ingest::segment::{decode_record, scan_segment, Decoded};

fuzz_target!(|data: &[u8]| {
    if let Ok(scan) = scan_segment(data) {
        assert!(scan.valid_len as usize <= data.len());
        assert!(scan.records.windows(2).all(|w| w[0].0 < w[1].0));
    }
    // raw record framing never claims more bytes than it was given
    match decode_record(data) {
        Ok(Decoded::Record { len, payload, .. }) => {
            assert!(payload.len() < len && len <= data.len())
        }
        Ok(Decoded::Corrupt { len }) => assert!(len <= data.len()),
        Ok(Decoded::Incomplete) | Err(_) => {}
    }
});
