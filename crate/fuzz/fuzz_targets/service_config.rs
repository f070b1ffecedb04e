#![no_main]

use componenthub_gateway::ServiceConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = ServiceConfig::from_toml(text, Vec::<(String, String)>::new());
});
