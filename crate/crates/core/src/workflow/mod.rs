//! Structure-only workflow descriptors.
//!
//! Extraction keeps steps, ports and step-to-step dataflow edges. Workflow
//! inputs become parameters. Expressions, requirements and scatter settings
//! are carried verbatim as opaque step annotations and never interpreted.

mod cwl;
mod steps;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WorkflowError {
    #[error("unsupported workflow dialect {0:?}")]
    UnsupportedDialect(String),
    #[error("parse failure at {location}: {message}")]
    ParseFailure { location: String, message: String },
    #[error("workflow contains a cycle through steps {steps:?}")]
    CyclicWorkflow { steps: Vec<String> },
}

impl WorkflowError {
    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        WorkflowError::ParseFailure {
            location: location.into(),
            message: message.into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dialect {
    Cwl,
    GenericYamlSteps,
}

impl Dialect {
    pub fn parse(hint: &str) -> Result<Self, WorkflowError> {
        match hint.trim().to_ascii_lowercase().as_str() {
            "cwl" => Ok(Dialect::Cwl),
            "generic-yaml-steps" => Ok(Dialect::GenericYamlSteps),
            other => Err(WorkflowError::UnsupportedDialect(other.to_string())),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Dialect::Cwl => "cwl",
            Dialect::GenericYamlSteps => "generic-yaml-steps",
        }
    }

    /// Guess from a file name; `None` when the extension says nothing.
    pub fn from_path(path: &str) -> Option<Self> {
        let lower = path.to_ascii_lowercase();
        if lower.ends_with(".cwl") {
            Some(Dialect::Cwl)
        } else if lower.ends_with(".yml") || lower.ends_with(".yaml") {
            Some(Dialect::GenericYamlSteps)
        } else {
            None
        }
    }
}

impl fmt::Display for Dialect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub id: String,
    pub tool_hint: String,
    /// Qualified port ids, `<step>.<port>`.
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub annotations: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub from: String,
    pub to: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Parameter {
    pub id: String,
    pub type_hint: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbstractWorkflowDescriptor {
    pub steps: Vec<Step>,
    pub edges: Vec<Edge>,
    pub parameters: Vec<Parameter>,
}

impl AbstractWorkflowDescriptor {
    pub fn port_count(&self) -> usize {
        self.steps.iter().map(|s| s.inputs.len() + s.outputs.len()).sum()
    }

    /// YAML with top-level keys `steps`, `edges`, `parameters`.
    pub fn to_yaml(&self) -> String {
        serde_yaml::to_string(self).expect("descriptor serializes")
    }

    pub fn from_yaml(raw: &str) -> Result<Self, WorkflowError> {
        serde_yaml::from_str(raw).map_err(|e| WorkflowError::parse(location_of(&e), e.to_string()))
    }

    fn step_of_port<'a>(&self, port: &'a str) -> &'a str {
        port.split_once('.').map_or(port, |(s, _)| s)
    }

    /// Kahn's algorithm; ties broken by declaration order.
    pub fn topological_order(&self) -> Result<Vec<String>, WorkflowError> {
        let index: HashMap<&str, usize> = self.steps.iter().enumerate().map(|(i, s)| (s.id.as_str(), i)).collect();
        let n = self.steps.len();
        let mut indegree = vec![0usize; n];
        let mut succ: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
        for e in &self.edges {
            let (Some(&a), Some(&b)) = (index.get(self.step_of_port(&e.from)), index.get(self.step_of_port(&e.to))) else {
                continue;
            };
            if succ[a].insert(b) {
                indegree[b] += 1;
            }
        }
        let mut ready: BTreeSet<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(i) = ready.pop_first() {
            order.push(i);
            for &j in &succ[i] {
                indegree[j] -= 1;
                if indegree[j] == 0 {
                    ready.insert(j);
                }
            }
        }
        if order.len() < n {
            let done: BTreeSet<usize> = order.iter().copied().collect();
            return Err(WorkflowError::CyclicWorkflow {
                steps: (0..n).filter(|i| !done.contains(i)).map(|i| self.steps[i].id.clone()).collect(),
            });
        }
        Ok(order.into_iter().map(|i| self.steps[i].id.clone()).collect())
    }

    /// Structural invariants shared by both dialects: unique step ids,
    /// unique ports, edges between declared ports, no cycles.
    fn check(self) -> Result<Self, WorkflowError> {
        let mut ids = BTreeSet::new();
        let mut outputs = BTreeSet::new();
        let mut inputs = BTreeSet::new();
        for s in &self.steps {
            if !ids.insert(s.id.as_str()) {
                return Err(WorkflowError::parse(format!("steps.{}", s.id), "duplicate step id"));
            }
            for p in &s.inputs {
                if !inputs.insert(p.as_str()) {
                    return Err(WorkflowError::parse(p.clone(), "duplicate input port"));
                }
            }
            for p in &s.outputs {
                if !outputs.insert(p.as_str()) {
                    return Err(WorkflowError::parse(p.clone(), "duplicate output port"));
                }
            }
        }
        for e in &self.edges {
            if !outputs.contains(e.from.as_str()) {
                return Err(WorkflowError::parse(e.from.clone(), "edge source is not a declared output port"));
            }
            if !inputs.contains(e.to.as_str()) {
                return Err(WorkflowError::parse(e.to.clone(), "edge target is not a declared input port"));
            }
        }
        self.topological_order()?;
        Ok(self)
    }
}

/// Parse `main_file` in the given dialect into a structure-only descriptor.
pub fn extract_abstract_workflow(main_file: &[u8], dialect_hint: &str) -> Result<AbstractWorkflowDescriptor, WorkflowError> {
    let dialect = Dialect::parse(dialect_hint)?;
    let text = std::str::from_utf8(main_file)
        .map_err(|e| WorkflowError::parse(format!("byte {}", e.valid_up_to()), "input is not UTF-8"))?;
    let value: serde_yaml::Value =
        serde_yaml::from_str(text).map_err(|e| WorkflowError::parse(location_of(&e), e.to_string()))?;
    let descriptor = match dialect {
        Dialect::Cwl => cwl::extract(&value)?,
        Dialect::GenericYamlSteps => steps::extract(&value)?,
    };
    descriptor.check()
}

fn location_of(e: &serde_yaml::Error) -> String {
    e.location()
        .map(|l| format!("line {} column {}", l.line(), l.column()))
        .unwrap_or_else(|| "document".to_string())
}

pub(crate) fn scalar_string(v: &serde_yaml::Value) -> Option<String> {
    match v {
        serde_yaml::Value::String(s) => Some(s.clone()),
        serde_yaml::Value::Number(n) => Some(n.to_string()),
        serde_yaml::Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

/// Verbatim, compact rendering of an opaque value.
pub(crate) fn opaque(v: &serde_yaml::Value) -> String {
    match scalar_string(v) {
        Some(s) => s,
        None => serde_json::to_string(v).unwrap_or_else(|_| format!("{v:?}")),
    }
}
