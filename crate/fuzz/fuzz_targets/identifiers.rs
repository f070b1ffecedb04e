#![no_main]

use componenthub_core::federation::SyncCursor;
use componenthub_core::store::Facet;
use componenthub_core::{Checksum, ComponentKind, PersistentIdentifier, Role, Timestamp, Visibility};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(raw) = std::str::from_utf8(data) else { return };
    if let Ok(pid) = raw.parse::<PersistentIdentifier>() {
        assert_eq!(pid.to_string().parse::<PersistentIdentifier>().unwrap(), pid);
    }
    if let Ok(cursor) = raw.parse::<SyncCursor>() {
        assert_eq!(cursor.to_string().parse::<SyncCursor>().unwrap(), cursor);
    }
    let _ = raw.parse::<Checksum>();
    let _ = Timestamp::parse_rfc3339(raw);
    let _ = ComponentKind::parse_loose(raw);
    let _ = Role::parse(raw);
    let _ = Visibility::parse(raw);
    let _ = Facet::parse(raw);
});
