#![no_main]

use componenthub_core::rocrate::{validate_crate, WorkflowCrate};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(krate) = WorkflowCrate::from_metadata(data) {
        let _ = validate_crate(&krate);
        let _ = WorkflowCrate::from_metadata(&krate.metadata_json()).expect("written metadata reads back");
    }
});
