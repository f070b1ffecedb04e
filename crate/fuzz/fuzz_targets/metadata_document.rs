#![no_main]

use componenthub_core::document::{canonicalize_document, validate_document};
use componenthub_core::MetadataDocument;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(doc) = MetadataDocument::from_json(data) else { return };
    let report = validate_document(&doc);
    if let Ok(bytes) = canonicalize_document(&doc) {
        // canonical form is a fixed point
        let again = MetadataDocument::from_json(&bytes).expect("canonical bytes parse");
        assert_eq!(canonicalize_document(&again).ok(), Some(bytes));
        assert!(report.valid || report.errors().count() > 0);
    }
});
