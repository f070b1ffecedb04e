#![no_main]

use componenthub_gateway::cli::parse_source;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(raw) = std::str::from_utf8(data) {
        if let Ok(source) = parse_source(raw) {
            source.check().expect("parsed sources are well-formed");
        }
    }
});
