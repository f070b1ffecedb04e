#![no_main]

use componenthub_core::watch::ProvenanceEvent;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    for line in text.lines() {
        if let Ok(v) = serde_json::from_str::<serde_json::Value>(line) {
            let _ = ProvenanceEvent::from_value(v);
        }
    }
});
