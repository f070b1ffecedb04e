//! Generic YAML steps dialect:
//!
//! ```yaml
//! parameters:
//!   - {id: reads, type: File}
//! steps:
//!   - {id: s1, tool: bwa, inputs: [in], outputs: [out]}
//!   - {id: s2, tool: samtools, inputs: [in], outputs: [out]}
//! edges:
//!   - {from: s1.out, to: s2.in}
//! ```

use serde_yaml::{Mapping, Value};

use super::{opaque, scalar_string, AbstractWorkflowDescriptor, Edge, Parameter, Step, WorkflowError};

pub(super) fn extract(root: &Value) -> Result<AbstractWorkflowDescriptor, WorkflowError> {
    let doc = root
        .as_mapping()
        .ok_or_else(|| WorkflowError::parse("document", "expected a mapping with a steps list"))?;
    let steps = list(doc, "steps")?
        .iter()
        .enumerate()
        .map(|(i, v)| step(v, i))
        .collect::<Result<Vec<_>, _>>()?;
    let parameters = list(doc, "parameters")?
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let loc = format!("parameters[{i}]");
            let m = v.as_mapping().ok_or_else(|| WorkflowError::parse(&loc, "must be a mapping"))?;
            Ok(Parameter {
                id: string_field(m, "id", &loc)?,
                type_hint: m.get("type").map(opaque).unwrap_or_else(|| "Any".to_string()),
            })
        })
        .collect::<Result<Vec<_>, WorkflowError>>()?;
    let edges = list(doc, "edges")?
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let loc = format!("edges[{i}]");
            let m = v.as_mapping().ok_or_else(|| WorkflowError::parse(&loc, "must be a mapping"))?;
            Ok(Edge {
                from: string_field(m, "from", &loc)?,
                to: string_field(m, "to", &loc)?,
            })
        })
        .collect::<Result<Vec<_>, WorkflowError>>()?;
    Ok(AbstractWorkflowDescriptor {
        steps,
        edges,
        parameters,
    })
}

fn list<'a>(doc: &'a Mapping, key: &str) -> Result<&'a [Value], WorkflowError> {
    match doc.get(key) {
        None | Some(Value::Null) => Ok(&[]),
        Some(Value::Sequence(items)) => Ok(items),
        Some(_) => Err(WorkflowError::parse(key, "must be a list")),
    }
}

fn string_field(m: &Mapping, key: &str, loc: &str) -> Result<String, WorkflowError> {
    m.get(key)
        .and_then(scalar_string)
        .filter(|s| !s.trim().is_empty())
        .ok_or_else(|| WorkflowError::parse(format!("{loc}.{key}"), "required string"))
}

fn step(v: &Value, i: usize) -> Result<Step, WorkflowError> {
    let loc = format!("steps[{i}]");
    let m = v.as_mapping().ok_or_else(|| WorkflowError::parse(&loc, "must be a mapping"))?;
    let id = string_field(m, "id", &loc)?;
    if id.contains('.') {
        return Err(WorkflowError::parse(format!("{loc}.id"), "step ids must not contain '.'"));
    }
    let ports = |key: &str| -> Result<Vec<String>, WorkflowError> {
        list(m, key)?
            .iter()
            .map(|p| {
                scalar_string(p)
                    .filter(|s| !s.is_empty())
                    .map(|p| format!("{id}.{p}"))
                    .ok_or_else(|| WorkflowError::parse(format!("{loc}.{key}"), "port names must be strings"))
            })
            .collect()
    };
    let mut annotations = std::collections::BTreeMap::new();
    for (k, v) in m {
        let Some(k) = k.as_str() else { continue };
        if !matches!(k, "id" | "tool" | "inputs" | "outputs") {
            annotations.insert(k.to_string(), opaque(v));
        }
    }
    Ok(Step {
        tool_hint: m.get("tool").map(opaque).unwrap_or_else(|| "unspecified".to_string()),
        inputs: ports("inputs")?,
        outputs: ports("outputs")?,
        annotations,
        id,
    })
}

#[cfg(test)]
mod tests {
    use super::super::{extract_abstract_workflow, WorkflowError};

    #[test]
    fn chain_and_cycle() {
        let ok = "steps:\n  - {id: s1, tool: a, inputs: [in], outputs: [out]}\n  - {id: s2, tool: b, inputs: [in], outputs: [out]}\nedges:\n  - {from: s1.out, to: s2.in}\n";
        let d = extract_abstract_workflow(ok.as_bytes(), "generic-yaml-steps").unwrap();
        assert_eq!(d.topological_order().unwrap(), vec!["s1", "s2"]);

        let cyclic = format!("{ok}  - {{from: s2.out, to: s1.in}}\n");
        assert!(matches!(
            extract_abstract_workflow(cyclic.as_bytes(), "generic-yaml-steps"),
            Err(WorkflowError::CyclicWorkflow { .. })
        ));
    }

    #[test]
    fn dangling_edge() {
        let src = "steps:\n  - {id: s1, inputs: [in], outputs: [out]}\nedges:\n  - {from: s1.nope, to: s1.in}\n";
        assert!(matches!(
            extract_abstract_workflow(src.as_bytes(), "generic-yaml-steps"),
            Err(WorkflowError::ParseFailure { .. })
        ));
    }
}
