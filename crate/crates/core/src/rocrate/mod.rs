//! Workflow-RO-Crate packages.
//!
//! A crate is a flat graph of JSON-LD-shaped entities plus the files they
//! describe. Parsing is lenient: unknown entity types and properties are
//! kept as-is. Validation is strict but only covers the small profile the
//! registry relies on.

mod mapping;
mod package;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;

use serde_json::{json, Map, Value};

use crate::checksum::Checksum;
use crate::document::{Issue, ValidationReport};
use crate::error::{Error, Result};
use crate::source::is_safe_relative_path;

pub use mapping::ImportedCrate;
pub use package::{read_dir, read_zip, write_dir, write_zip, ZipLimits};

pub const METADATA_FILE: &str = "ro-crate-metadata.json";
pub const CONTEXT: &str = "https://w3id.org/ro/crate/1.1/context";
pub const RO_CRATE_SPEC: &str = "https://w3id.org/ro/crate/1.1";
pub const WORKFLOW_PROFILE_URI: &str = "https://w3id.org/workflowhub/workflow-ro-crate/1.0";
pub const WORKFLOW_PROFILE: &str = "workflow-ro-crate";
pub const PLAIN_PROFILE: &str = "ro-crate";
pub const ROOT_ID: &str = "./";
pub const WORKFLOW_TYPE: &str = "ComputationalWorkflow";

/// Marker properties written by the registry; importers elsewhere ignore them.
pub const TOMBSTONED_PROP: &str = "componenthub:tombstoned";
pub const TOMBSTONE_REASON_PROP: &str = "componenthub:tombstoneReason";
pub const SOURCE_SCHEME_PROP: &str = "componenthub:sourceScheme";
pub const SOURCE_LOCATOR_PROP: &str = "componenthub:sourceLocator";
pub const SOURCE_REF_PROP: &str = "componenthub:sourceRef";

/// Crate reports share the document report shape; `property` holds the
/// rule id (`root.license`, `main.file-missing`, ...).
pub type CrateValidationReport = ValidationReport;

#[derive(Clone, Debug, PartialEq)]
pub struct Entity {
    pub id: String,
    pub types: Vec<String>,
    pub properties: Map<String, Value>,
}

impl Entity {
    pub fn new(id: impl Into<String>, types: &[&str]) -> Self {
        Entity {
            id: id.into(),
            types: types.iter().map(|t| t.to_string()).collect(),
            properties: Map::new(),
        }
    }

    pub fn with(mut self, key: &str, value: Value) -> Self {
        self.properties.insert(key.to_string(), value);
        self
    }

    pub fn has_type(&self, t: &str) -> bool {
        self.types.iter().any(|x| x == t)
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.properties.get(key)
    }

    pub fn str_prop(&self, key: &str) -> Option<&str> {
        self.get(key).and_then(Value::as_str)
    }

    /// Ids referenced by `key`, accepting a single `{"@id"}` or a list.
    pub fn refs(&self, key: &str) -> Vec<&str> {
        match self.get(key) {
            Some(Value::Array(items)) => items.iter().filter_map(ref_id).collect(),
            Some(v) => ref_id(v).into_iter().collect(),
            None => Vec::new(),
        }
    }

    fn to_value(&self) -> Value {
        let mut obj = Map::new();
        obj.insert("@id".into(), Value::String(self.id.clone()));
        let types = match self.types.as_slice() {
            [one] => Value::String(one.clone()),
            many => Value::Array(many.iter().cloned().map(Value::String).collect()),
        };
        obj.insert("@type".into(), types);
        for (k, v) in &self.properties {
            obj.insert(k.clone(), v.clone());
        }
        Value::Object(obj)
    }

    fn from_value(v: &Value, i: usize) -> Result<Self> {
        let obj = v
            .as_object()
            .ok_or_else(|| Error::Packaging(format!("@graph[{i}] is not an object")))?;
        let id = obj
            .get("@id")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::Packaging(format!("@graph[{i}] has no @id")))?
            .to_string();
        let types = match obj.get("@type") {
            Some(Value::String(s)) => vec![s.clone()],
            Some(Value::Array(items)) => items.iter().filter_map(Value::as_str).map(str::to_string).collect(),
            _ => Vec::new(),
        };
        let properties = obj
            .iter()
            .filter(|(k, _)| *k != "@id" && *k != "@type")
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        Ok(Entity { id, types, properties })
    }
}

pub fn id_ref(id: &str) -> Value {
    json!({ "@id": id })
}

fn ref_id(v: &Value) -> Option<&str> {
    v.as_object().and_then(|o| o.get("@id")).and_then(Value::as_str)
}

/// Ids that name something outside the package.
pub fn is_external_id(id: &str) -> bool {
    id.starts_with('#') || id.contains("://") || id.starts_with("urn:") || id.starts_with("doi:")
}

#[derive(Clone, PartialEq, Eq)]
pub enum Attachment {
    Inline(Arc<[u8]>),
    /// Too large to copy; served from `location`.
    Reference {
        location: String,
        checksum: Checksum,
        size: u64,
    },
}

impl Attachment {
    pub fn inline(bytes: impl Into<Vec<u8>>) -> Self {
        Attachment::Inline(bytes.into().into())
    }

    pub fn checksum(&self) -> Checksum {
        match self {
            Attachment::Inline(b) => Checksum::of(b),
            Attachment::Reference { checksum, .. } => *checksum,
        }
    }

    pub fn size(&self) -> u64 {
        match self {
            Attachment::Inline(b) => b.len() as u64,
            Attachment::Reference { size, .. } => *size,
        }
    }

    pub fn read(&self) -> Result<Vec<u8>> {
        match self {
            Attachment::Inline(b) => Ok(b.to_vec()),
            Attachment::Reference { location, .. } => {
                std::fs::read(location).map_err(|e| Error::Packaging(format!("{location}: {e}")))
            }
        }
    }
}

impl std::fmt::Debug for Attachment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Attachment::Inline(b) => write!(f, "Inline({} bytes)", b.len()),
            Attachment::Reference { location, size, .. } => write!(f, "Reference({location}, {size} bytes)"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorkflowCrate {
    pub entities: Vec<Entity>,
    pub attachments: BTreeMap<String, Attachment>,
    pub profile: String,
}

impl WorkflowCrate {
    /// Parse `ro-crate-metadata.json`; attachments are added separately.
    pub fn from_metadata(bytes: &[u8]) -> Result<Self> {
        let doc: Value = serde_json::from_slice(bytes)
            .map_err(|e| Error::Packaging(format!("{METADATA_FILE}: {e}")))?;
        let graph = doc
            .get("@graph")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::Packaging(format!("{METADATA_FILE}: missing @graph array")))?;
        let entities = graph
            .iter()
            .enumerate()
            .map(|(i, v)| Entity::from_value(v, i))
            .collect::<Result<Vec<_>>>()?;
        let mut krate = WorkflowCrate {
            entities,
            attachments: BTreeMap::new(),
            profile: PLAIN_PROFILE.to_string(),
        };
        krate.profile = krate.detect_profile().to_string();
        Ok(krate)
    }

    fn detect_profile(&self) -> &'static str {
        let declares = |e: &Entity| e.refs("conformsTo").iter().any(|r| r.contains(WORKFLOW_PROFILE));
        let root_main = self.root().is_some_and(|r| r.get("mainEntity").is_some());
        if root_main || self.entities.iter().any(declares) {
            WORKFLOW_PROFILE
        } else {
            PLAIN_PROFILE
        }
    }

    pub fn metadata_value(&self) -> Value {
        json!({
            "@context": CONTEXT,
            "@graph": self.entities.iter().map(Entity::to_value).collect::<Vec<_>>(),
        })
    }

    pub fn metadata_json(&self) -> Vec<u8> {
        serde_json::to_vec_pretty(&self.metadata_value()).expect("crate metadata serializes")
    }

    pub fn entity(&self, id: &str) -> Option<&Entity> {
        self.entities.iter().find(|e| e.id == id)
    }

    /// The root dataset: the entity the metadata descriptor is `about`,
    /// falling back to `./`.
    pub fn root(&self) -> Option<&Entity> {
        let about = self
            .entity(METADATA_FILE)
            .and_then(|d| d.refs("about").first().copied())
            .unwrap_or(ROOT_ID);
        self.entity(about)
    }

    pub fn main_entity(&self) -> Option<&Entity> {
        let root = self.root()?;
        let id = root.refs("mainEntity").first().copied()?;
        self.entity(id)
    }

    pub fn is_tombstoned(&self) -> bool {
        self.root()
            .and_then(|r| r.get(TOMBSTONED_PROP))
            .and_then(Value::as_bool)
            .unwrap_or(false)
    }

    pub fn is_workflow_profile(&self) -> bool {
        self.profile == WORKFLOW_PROFILE
    }
}

/// Check a crate against its declared profile. Pure; never fails.
pub fn validate_crate(krate: &WorkflowCrate) -> CrateValidationReport {
    let mut issues = Vec::new();
    let tombstoned = krate.is_tombstoned();
    let missing = |rule: &str, msg: String| {
        if tombstoned {
            Issue::warning(rule, format!("{msg} (metadata-only tombstone)"))
        } else {
            Issue::error(rule, msg)
        }
    };

    let mut seen = HashSet::new();
    for e in &krate.entities {
        if !seen.insert(e.id.as_str()) {
            issues.push(Issue::error("graph.duplicate-id", format!("entity {:?} appears twice", e.id)));
        }
    }

    let about = krate
        .entity(METADATA_FILE)
        .and_then(|d| d.refs("about").first().copied())
        .unwrap_or(ROOT_ID);
    let roots = krate.entities.iter().filter(|e| e.id == about).count();
    if roots != 1 {
        issues.push(Issue::error("root.single", format!("expected one root dataset, found {roots}")));
    }
    let root = krate.root();

    if let Some(root) = root {
        if !root.has_type("Dataset") {
            issues.push(Issue::warning("root.type", "root entity is not typed Dataset"));
        }
        if !non_empty(root.get("license")) {
            issues.push(Issue::error("root.license", "root dataset has no license"));
        }
        let authors = root.refs("author");
        if authors.is_empty() {
            issues.push(Issue::error("root.author", "root dataset names no author"));
        } else {
            for a in authors {
                if krate.entity(a).is_none() && !is_external_id(a) {
                    issues.push(Issue::error("root.author", format!("author {a:?} is not described")));
                }
            }
        }
        for prop in ["name", "description"] {
            if root.str_prop(prop).is_none_or(|s| s.trim().is_empty()) {
                issues.push(Issue::warning(format!("root.{prop}"), format!("root dataset has no {prop}")));
            }
        }
    }

    let mut main_id = None;
    if krate.is_workflow_profile() {
        match root.and_then(|r| r.refs("mainEntity").first().copied()) {
            None => issues.push(Issue::error("root.main-entity", "root names no main entity")),
            Some(id) => match krate.entity(id) {
                None => issues.push(Issue::error("root.main-entity", format!("main entity {id:?} is not described"))),
                Some(main) => {
                    main_id = Some(id);
                    if !main.has_type(WORKFLOW_TYPE) {
                        issues.push(Issue::error(
                            "main.workflow-type",
                            format!("main entity is not typed {WORKFLOW_TYPE}"),
                        ));
                    }
                    if !is_external_id(id) && !krate.attachments.contains_key(id) {
                        issues.push(missing("main.file-missing", format!("{id:?} is not in the package")));
                    }
                }
            },
        }
    }

    for e in &krate.entities {
        if !e.has_type("File") || Some(e.id.as_str()) == main_id || is_external_id(&e.id) {
            continue;
        }
        if !krate.attachments.contains_key(&e.id) {
            issues.push(missing("file.missing", format!("{:?} is not in the package", e.id)));
        }
    }
    for path in krate.attachments.keys() {
        if !is_safe_relative_path(path) {
            issues.push(Issue::error("file.path", format!("{path:?} escapes the package")));
        }
    }

    let subject = root
        .and_then(|r| r.str_prop("name"))
        .unwrap_or("crate")
        .to_string();
    ValidationReport::from_issues(subject, issues)
}

fn non_empty(v: Option<&Value>) -> bool {
    match v {
        Some(Value::String(s)) => !s.trim().is_empty(),
        Some(Value::Object(o)) => o.get("@id").and_then(Value::as_str).is_some_and(|s| !s.is_empty()),
        Some(Value::Array(a)) => a.iter().any(|x| non_empty(Some(x))),
        _ => false,
    }
}

/// Index of entities by id, first occurrence wins.
pub(crate) fn entity_index(krate: &WorkflowCrate) -> HashMap<&str, &Entity> {
    let mut out = HashMap::new();
    for e in &krate.entities {
        out.entry(e.id.as_str()).or_insert(e);
    }
    out
}
