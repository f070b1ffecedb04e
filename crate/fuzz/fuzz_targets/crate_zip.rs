#![no_main]

use componenthub_core::rocrate::{read_zip, validate_crate, ZipLimits};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let limits = ZipLimits {
        max_entries: 256,
        max_total_bytes: 16 << 20,
    };
    if let Ok(krate) = read_zip(data, limits) {
        let _ = validate_crate(&krate);
    }
});
