//! Abstract CWL: steps, ports and links only.

use serde_yaml::{Mapping, Value};

use super::{opaque, scalar_string, AbstractWorkflowDescriptor, Edge, Parameter, Step, WorkflowError};

const OPAQUE_STEP_KEYS: [&str; 5] = ["scatter", "scatterMethod", "when", "requirements", "hints"];

pub(super) fn extract(root: &Value) -> Result<AbstractWorkflowDescriptor, WorkflowError> {
    let doc = select_main(root)?;
    let class = doc.get("class").and_then(Value::as_str).unwrap_or("");
    match class {
        "Workflow" => workflow(doc),
        "CommandLineTool" | "ExpressionTool" | "Operation" => single_tool(doc, class),
        "" => Err(WorkflowError::parse("class", "missing class")),
        other => Err(WorkflowError::parse("class", format!("unsupported CWL class {other:?}"))),
    }
}

/// Packed documents carry a `$graph`; the entry point is `#main`.
fn select_main(root: &Value) -> Result<&Mapping, WorkflowError> {
    let map = root
        .as_mapping()
        .ok_or_else(|| WorkflowError::parse("document", "CWL document must be a mapping"))?;
    let Some(graph) = map.get("$graph") else {
        return Ok(map);
    };
    let entries = graph
        .as_sequence()
        .ok_or_else(|| WorkflowError::parse("$graph", "must be a list"))?;
    let main = entries.iter().filter_map(Value::as_mapping).find(|m| {
        m.get("id")
            .and_then(Value::as_str)
            .is_some_and(|id| id.trim_start_matches('#') == "main")
    });
    main.or_else(|| {
        entries
            .iter()
            .filter_map(Value::as_mapping)
            .find(|m| m.get("class").and_then(Value::as_str) == Some("Workflow"))
    })
    .ok_or_else(|| WorkflowError::parse("$graph", "no #main entry"))
}

fn strip_id(raw: &str) -> String {
    raw.trim_start_matches('#').to_string()
}

/// Entries of a CWL "map or list of {id: ...}" field, in declaration order.
fn id_entries<'a>(v: Option<&'a Value>, location: &str) -> Result<Vec<(String, &'a Value)>, WorkflowError> {
    match v {
        None | Some(Value::Null) => Ok(Vec::new()),
        Some(Value::Mapping(m)) => m
            .iter()
            .map(|(k, v)| {
                scalar_string(k)
                    .map(|k| (strip_id(&k), v))
                    .ok_or_else(|| WorkflowError::parse(location, "keys must be strings"))
            })
            .collect(),
        Some(Value::Sequence(items)) => items
            .iter()
            .enumerate()
            .map(|(i, item)| match item {
                Value::String(s) => Ok((strip_id(s), item)),
                Value::Mapping(m) => m
                    .get("id")
                    .and_then(Value::as_str)
                    .map(|id| (strip_id(id), item))
                    .ok_or_else(|| WorkflowError::parse(format!("{location}[{i}]"), "entry has no id")),
                _ => Err(WorkflowError::parse(format!("{location}[{i}]"), "entry must be an id or mapping")),
            })
            .collect(),
        Some(_) => Err(WorkflowError::parse(location, "must be a mapping or list")),
    }
}

fn type_hint(v: &Value) -> String {
    match v {
        Value::Mapping(m) => m.get("type").map(opaque).unwrap_or_else(|| "Any".to_string()),
        Value::Null => "Any".to_string(),
        other => opaque(other),
    }
}

fn parameters(doc: &Mapping) -> Result<Vec<Parameter>, WorkflowError> {
    Ok(id_entries(doc.get("inputs"), "inputs")?
        .into_iter()
        .map(|(id, v)| Parameter {
            id,
            type_hint: type_hint(v),
        })
        .collect())
}

fn single_tool(doc: &Mapping, class: &str) -> Result<AbstractWorkflowDescriptor, WorkflowError> {
    let id = doc
        .get("id")
        .and_then(Value::as_str)
        .map(strip_id)
        .unwrap_or_else(|| "tool".to_string());
    let tool_hint = doc.get("baseCommand").map(opaque).unwrap_or_else(|| class.to_string());
    let inputs = id_entries(doc.get("inputs"), "inputs")?
        .into_iter()
        .map(|(p, _)| format!("{id}.{p}"))
        .collect();
    let outputs = id_entries(doc.get("outputs"), "outputs")?
        .into_iter()
        .map(|(p, _)| format!("{id}.{p}"))
        .collect();
    Ok(AbstractWorkflowDescriptor {
        steps: vec![Step {
            id,
            tool_hint,
            inputs,
            outputs,
            annotations: Default::default(),
        }],
        edges: Vec::new(),
        parameters: parameters(doc)?,
    })
}

struct RawStep<'a> {
    id: String,
    body: &'a Mapping,
}

fn workflow(doc: &Mapping) -> Result<AbstractWorkflowDescriptor, WorkflowError> {
    let params = parameters(doc)?;
    let raw_steps: Vec<RawStep> = id_entries(doc.get("steps"), "steps")?
        .into_iter()
        .map(|(id, v)| {
            v.as_mapping()
                .map(|body| RawStep { id: id.clone(), body })
                .ok_or_else(|| WorkflowError::parse(format!("steps.{id}"), "step must be a mapping"))
        })
        .collect::<Result<_, _>>()?;

    let mut steps = Vec::with_capacity(raw_steps.len());
    for rs in &raw_steps {
        let loc = format!("steps.{}", rs.id);
        let tool_hint = match rs.body.get("run") {
            Some(Value::String(s)) => s.clone(),
            Some(Value::Mapping(m)) => format!(
                "inline:{}",
                m.get("class").and_then(Value::as_str).unwrap_or("Process")
            ),
            Some(_) => return Err(WorkflowError::parse(format!("{loc}.run"), "run must be a path or mapping")),
            None => return Err(WorkflowError::parse(loc, "step has no run")),
        };
        let outputs = id_entries(rs.body.get("out"), &format!("{loc}.out"))?
            .into_iter()
            .map(|(p, _)| format!("{}.{p}", rs.id))
            .collect();
        let mut annotations = std::collections::BTreeMap::new();
        for key in OPAQUE_STEP_KEYS {
            if let Some(v) = rs.body.get(key) {
                annotations.insert(key.to_string(), opaque(v));
            }
        }
        let mut inputs = Vec::new();
        for (port, v) in id_entries(rs.body.get("in"), &format!("{loc}.in"))? {
            if let Some(expr) = v.as_mapping().and_then(|m| m.get("valueFrom")) {
                annotations.insert(format!("in.{port}.valueFrom"), opaque(expr));
            }
            inputs.push(format!("{}.{port}", rs.id));
        }
        steps.push(Step {
            id: rs.id.clone(),
            tool_hint,
            inputs,
            outputs,
            annotations,
        });
    }

    let mut edges = Vec::new();
    for rs in &raw_steps {
        let loc = format!("steps.{}.in", rs.id);
        for (port, v) in id_entries(rs.body.get("in"), &loc)? {
            for source in sources_of(v) {
                let source = strip_id(&source);
                match source.split_once('/') {
                    Some((step, out)) => {
                        if !raw_steps.iter().any(|s| s.id == step) {
                            return Err(WorkflowError::parse(
                                format!("{loc}.{port}"),
                                format!("source {source:?} names an unknown step"),
                            ));
                        }
                        edges.push(Edge {
                            from: format!("{step}.{out}"),
                            to: format!("{}.{port}", rs.id),
                        });
                    }
                    None => {
                        if !params.iter().any(|p| p.id == source) {
                            return Err(WorkflowError::parse(
                                format!("{loc}.{port}"),
                                format!("source {source:?} is neither a workflow input nor a step output"),
                            ));
                        }
                    }
                }
            }
        }
    }
    Ok(AbstractWorkflowDescriptor {
        steps,
        edges,
        parameters: params,
    })
}

fn sources_of(v: &Value) -> Vec<String> {
    let field = match v {
        Value::Mapping(m) => match m.get("source") {
            Some(s) => s,
            None => return Vec::new(),
        },
        other => other,
    };
    match field {
        Value::String(s) => vec![s.clone()],
        Value::Sequence(items) => items.iter().filter_map(Value::as_str).map(str::to_string).collect(),
        _ => Vec::new(),
    }
}
