#![no_main]

use libfuzzer_sys::fuzz_target;
use specmon_core::sensor::{decode_payload, IqCodec};

// First byte picks the codec.
fuzz_target!(|data: &[u8]| {
    let Some((&tag, payload)) = data.split_first() else {
        return;
    };
    let codec = match tag % 3 {
        0 => IqCodec::None,
        1 => IqCodec::LosslessZip,
        _ => IqCodec::Quantized8,
    };
    let _ = decode_payload(codec, payload);
});
