#![no_main]

use componenthub_core::workflow::{extract_abstract_workflow, AbstractWorkflowDescriptor};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Some((&selector, body)) = data.split_first() else { return };
    match selector % 3 {
        0 => {
            if let Ok(d) = extract_abstract_workflow(body, "cwl") {
                d.topological_order().expect("extracted workflows are acyclic");
            }
        }
        1 => {
            if let Ok(d) = extract_abstract_workflow(body, "generic-yaml-steps") {
                d.topological_order().expect("extracted workflows are acyclic");
            }
        }
        _ => {
            if let Ok(text) = std::str::from_utf8(body) {
                let _ = AbstractWorkflowDescriptor::from_yaml(text);
            }
        }
    }
});
