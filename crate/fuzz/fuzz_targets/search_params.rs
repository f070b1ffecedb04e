#![no_main]

use std::collections::BTreeMap;

use componenthub_gateway::http::search_query;
use libfuzzer_sys::fuzz_target;

// one `key=value` pair per line
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let params: BTreeMap<String, String> = text
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
    if let Ok(q) = search_query(&params) {
        q.check().expect("accepted queries pass their own check");
    }
});
