#![no_main]

use componenthub_core::access::{AuthToken, HmacTokenAuthority, TokenVerifier};
use componenthub_core::Timestamp;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(header) = std::str::from_utf8(data) else { return };
    let authority = HmacTokenAuthority::new("fuzz-secret");
    if let Ok(token) = AuthToken::from_authorization_header(header) {
        let _ = authority.verify(&token, Timestamp::from_unix(1_700_000_000));
    }
});
