//! Crate ⇄ record mapping.

use serde_json::{json, Value};

use super::{
    entity_index, id_ref, is_external_id, validate_crate, write_zip, Attachment, Entity, WorkflowCrate, METADATA_FILE,
    PLAIN_PROFILE, ROOT_ID, RO_CRATE_SPEC, SOURCE_LOCATOR_PROP, SOURCE_REF_PROP, SOURCE_SCHEME_PROP,
    TOMBSTONED_PROP, TOMBSTONE_REASON_PROP, WORKFLOW_PROFILE, WORKFLOW_PROFILE_URI, WORKFLOW_TYPE,
};
use crate::access::{authorize, AccessPolicy, Action, Principal, Target};
use crate::checksum::Checksum;
use crate::document::{validate_document_for, Author, Issue, MetadataDocument, Severity, ValidationReport};
use crate::error::{Error, Result};
use crate::pid::{ComponentKind, PersistentIdentifier};
use crate::source::{SourceDescriptor, SourceScheme};
use crate::store::{ComponentRecord, Registry};

/// Root properties the mapping consumes itself; everything else on the
/// root is carried into the document verbatim.
const MAPPED_ROOT_PROPS: [&str; 11] = [
    "name",
    "description",
    "license",
    "author",
    "keywords",
    "kind",
    "identifier",
    "version",
    "mainEntity",
    "hasPart",
    "conformsTo",
];

/// Document properties written to dedicated crate properties on export.
const MAPPED_DOC_PROPS: [&str; 6] = ["name", "description", "license", "authors", "keywords", "kind"];

#[derive(Clone, Debug)]
pub struct ImportedCrate {
    pub record: ComponentRecord,
    pub warnings: Vec<Issue>,
}

fn invalid(subject: &str, issues: Vec<Issue>) -> Error {
    Error::InvalidCrate(Box::new(ValidationReport::from_issues(subject, issues)))
}

impl Registry {
    /// Register a record from a validated crate. Attachments are stored as
    /// file sources; the original metadata bytes are kept as a blob.
    pub fn import_crate(
        &self,
        krate: &WorkflowCrate,
        policy: AccessPolicy,
        principal: &Principal,
    ) -> Result<ImportedCrate> {
        let report = validate_crate(krate);
        if !report.valid {
            return Err(Error::InvalidCrate(Box::new(report)));
        }
        if krate.is_tombstoned() {
            return Err(invalid(
                &report.subject,
                vec![Issue::error("root.tombstoned", "tombstone crates carry metadata only and cannot be imported")],
            ));
        }
        authorize(principal, Action::Register, Target::Enclave(&policy.enclave), self.now())
            .into_result()
            .map_err(Error::Unauthorized)?;

        let mut warnings: Vec<Issue> = report.warnings().cloned().collect();
        let document = crate_to_document(krate, &mut warnings);
        let doc_report = validate_document_for(&document, &report.subject);
        let mut doc_issues = Vec::new();
        for issue in doc_report.issues {
            let moved = Issue {
                property: format!("document.{}", issue.property),
                ..issue
            };
            match moved.severity {
                Severity::Error => doc_issues.push(moved),
                Severity::Warning => warnings.push(moved),
            }
        }
        if !doc_issues.is_empty() {
            return Err(invalid(&report.subject, doc_issues));
        }

        let mut sources = Vec::new();
        for (path, attachment) in &krate.attachments {
            let sum = match attachment {
                Attachment::Inline(bytes) => self.blobs().put(bytes)?,
                Attachment::Reference { location, checksum, .. } => {
                    self.blobs().put_reference(*checksum, location)?;
                    *checksum
                }
            };
            sources.push(SourceDescriptor::new(SourceScheme::File, path.clone()).with_checksum(sum));
        }
        for e in &krate.entities {
            if let Some(s) = external_source(e) {
                sources.push(s);
            }
        }
        let main_entity = krate.main_entity().map(|m| m.id.clone());
        let origin = self.blobs().put(&krate.metadata_json())?;
        let record = self.register_with(document, sources, policy, principal, main_entity, Some(origin))?;
        Ok(ImportedCrate { record, warnings })
    }

    /// Crate for the latest (or given) version. Tombstoned records yield a
    /// metadata-only crate marked as such.
    pub fn export_crate(
        &self,
        pid: &PersistentIdentifier,
        principal: &Principal,
        version: Option<u32>,
    ) -> Result<WorkflowCrate> {
        let record = self.resolve_full(pid, principal)?;
        let (document, sources, main_entity) = match version {
            None => (record.document.clone(), record.sources.clone(), record.main_entity.clone()),
            Some(v) => {
                let snap = self.version(pid, v).ok_or_else(|| Error::VersionNotFound {
                    pid: pid.to_string(),
                    version: v.to_string(),
                })?;
                (snap.document, snap.sources, snap.main_entity)
            }
        };
        let mut krate = record_to_crate(&record, &document, &sources, main_entity.as_deref());
        if !record.is_tombstoned() {
            for s in sources.iter().filter(|s| s.scheme == SourceScheme::File) {
                let sum = s.checksum.expect("file sources carry checksums");
                let bytes = self
                    .blobs()
                    .get(&sum)?
                    .ok_or_else(|| Error::storage(format!("blob {sum} for {pid} is missing")))?;
                krate.attachments.insert(s.locator.clone(), Attachment::inline(bytes));
            }
        }
        Ok(krate)
    }

    /// Zipped crate. A tombstoned record answers `Gone` carrying its
    /// metadata-only crate.
    pub fn download_crate(
        &self,
        pid: &PersistentIdentifier,
        principal: &Principal,
        version: Option<u32>,
    ) -> Result<Vec<u8>> {
        let krate = self.export_crate(pid, principal, version)?;
        if krate.is_tombstoned() {
            return Err(Error::Gone {
                pid: pid.to_string(),
                metadata: Some(Box::new(krate)),
            });
        }
        write_zip(&krate)
    }
}

fn crate_to_document(krate: &WorkflowCrate, warnings: &mut Vec<Issue>) -> MetadataDocument {
    let index = entity_index(krate);
    let root = krate.root().expect("validated crate has a root");
    let mut doc = MetadataDocument::new();
    for prop in ["name", "description"] {
        if let Some(s) = root.str_prop(prop) {
            doc.set(prop, s);
        }
    }
    if let Some(license) = root.get("license").and_then(|v| license_text(v, &index)) {
        doc.set("license", license);
    }
    let authors: Vec<Author> = root
        .refs("author")
        .into_iter()
        .map(|id| match index.get(id) {
            Some(p) => Author {
                name: p.str_prop("name").unwrap_or(id).to_string(),
                identifier: p
                    .str_prop("identifier")
                    .map(str::to_string)
                    .or_else(|| (!id.starts_with('#')).then(|| id.to_string())),
            },
            None => Author {
                name: id.to_string(),
                identifier: Some(id.to_string()),
            },
        })
        .collect();
    doc.set("authors", serde_json::to_value(authors).expect("authors serialize"));
    doc.set("keywords", keywords(root.get("keywords")));

    let hint = root.str_prop("kind").and_then(ComponentKind::parse_loose);
    let main_is_workflow = krate.main_entity().is_some_and(|m| m.has_type(WORKFLOW_TYPE));
    if main_is_workflow {
        if let Some(h) = hint.filter(|h| *h != ComponentKind::Workflow) {
            warnings.push(Issue::warning(
                "root.kind",
                format!("kind hint {:?} ignored; the main entity is a workflow and {} artifacts are secondary", h.name(), h.name()),
            ));
        }
        doc.set("kind", ComponentKind::Workflow.name());
    } else if let Some(h) = hint {
        doc.set("kind", h.name());
    } else if let Some(raw) = root.get("kind") {
        doc.set("kind", raw.clone());
    }

    for (k, v) in &root.properties {
        if MAPPED_ROOT_PROPS.contains(&k.as_str()) || k.starts_with("componenthub:") || k.starts_with('@') {
            continue;
        }
        doc.set(k, v.clone());
    }
    doc
}

fn license_text(v: &Value, index: &std::collections::HashMap<&str, &Entity>) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Array(items) => items.iter().find_map(|i| license_text(i, index)),
        Value::Object(o) => {
            let id = o.get("@id")?.as_str()?;
            let named = index
                .get(id)
                .and_then(|e| e.str_prop("identifier").or_else(|| e.str_prop("name")));
            Some(named.unwrap_or(id).to_string())
        }
        _ => None,
    }
}

fn keywords(v: Option<&Value>) -> Value {
    let list: Vec<String> = match v {
        Some(Value::String(s)) => s.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::to_string).collect(),
        Some(Value::Array(items)) => items.iter().filter_map(Value::as_str).map(str::to_string).collect(),
        _ => Vec::new(),
    };
    json!(list)
}

fn external_source(e: &Entity) -> Option<SourceDescriptor> {
    if !e.has_type("File") || !is_external_id(&e.id) {
        return None;
    }
    let locator = match e.str_prop(SOURCE_LOCATOR_PROP) {
        Some(l) => l.to_string(),
        None if e.id.contains("://") => e.id.clone(),
        None => return None,
    };
    let scheme = e
        .str_prop(SOURCE_SCHEME_PROP)
        .and_then(SourceScheme::parse)
        .unwrap_or_else(|| guess_scheme(&locator));
    let mut s = SourceDescriptor::new(scheme, locator);
    if let Some(r) = e.str_prop(SOURCE_REF_PROP) {
        s = s.with_ref(r);
    }
    if let Some(sum) = e.str_prop("sha256").and_then(Checksum::from_hex) {
        s = s.with_checksum(sum);
    }
    Some(s)
}

fn guess_scheme(locator: &str) -> SourceScheme {
    if locator.contains("doi.org/") {
        SourceScheme::Doi
    } else if locator.ends_with(".git") || locator.starts_with("git") {
        SourceScheme::Git
    } else if locator.starts_with("oci://") {
        SourceScheme::Oci
    } else {
        SourceScheme::Https
    }
}

fn license_entity_id(license: &str) -> String {
    if license.contains("://") {
        license.to_string()
    } else {
        format!("https://spdx.org/licenses/{license}")
    }
}

fn source_entity_id(s: &SourceDescriptor, i: usize) -> String {
    if s.scheme == SourceScheme::File || s.locator.contains("://") {
        s.locator.clone()
    } else {
        format!("#source-{i}")
    }
}

pub(crate) fn record_to_crate(
    record: &ComponentRecord,
    document: &MetadataDocument,
    sources: &[SourceDescriptor],
    main_entity: Option<&str>,
) -> WorkflowCrate {
    let is_workflow = record.kind == ComponentKind::Workflow;
    let mut root = Entity::new(ROOT_ID, &["Dataset"]);
    let mut extra = Vec::new();

    for prop in ["name", "description"] {
        if let Some(v) = document.get(prop) {
            root.properties.insert(prop.into(), v.clone());
        }
    }
    if let Some(license) = document.license() {
        let id = license_entity_id(license);
        root.properties.insert("license".into(), id_ref(&id));
        extra.push(
            Entity::new(id, &["CreativeWork"])
                .with("identifier", json!(license))
                .with("name", json!(license)),
        );
    }
    let mut author_refs = Vec::new();
    let mut used = std::collections::HashSet::new();
    for (i, a) in document.authors().into_iter().enumerate() {
        let mut person = match &a.identifier {
            Some(id) if !id.starts_with('#') && used.insert(id.clone()) => Entity::new(id.clone(), &["Person"]),
            Some(id) => Entity::new(format!("#author-{i}"), &["Person"]).with("identifier", json!(id)),
            None => Entity::new(format!("#author-{i}"), &["Person"]),
        };
        person.properties.insert("name".into(), json!(a.name));
        author_refs.push(id_ref(&person.id));
        extra.push(person);
    }
    root.properties.insert("author".into(), Value::Array(author_refs));
    root.properties.insert("keywords".into(), json!(document.keywords()));
    root.properties.insert("kind".into(), json!(record.kind.name()));
    root.properties.insert("identifier".into(), json!(record.pid.to_string()));
    root.properties.insert("version".into(), json!(record.version));
    for (k, v) in document.iter() {
        if !MAPPED_DOC_PROPS.contains(&k.as_str()) {
            root.properties.insert(k.clone(), v.clone());
        }
    }

    let ids: Vec<String> = sources.iter().enumerate().map(|(i, s)| source_entity_id(s, i)).collect();
    let main = is_workflow.then(|| {
        main_entity
            .filter(|m| ids.iter().any(|id| id == m))
            .map(str::to_string)
            .or_else(|| {
                sources
                    .iter()
                    .position(|s| s.scheme == SourceScheme::File)
                    .or((!ids.is_empty()).then_some(0))
                    .map(|i| ids[i].clone())
            })
    });
    let main = main.flatten();
    let mut parts = Vec::new();
    for (s, id) in sources.iter().zip(&ids) {
        let mut e = if Some(id) == main.as_ref() {
            Entity::new(id.clone(), &["File", "SoftwareSourceCode", WORKFLOW_TYPE])
        } else {
            Entity::new(id.clone(), &["File"])
        };
        if s.scheme != SourceScheme::File {
            e.properties.insert(SOURCE_SCHEME_PROP.into(), json!(s.scheme.as_str()));
            e.properties.insert(SOURCE_LOCATOR_PROP.into(), json!(s.locator));
            if let Some(r) = &s.reference {
                e.properties.insert(SOURCE_REF_PROP.into(), json!(r));
            }
        }
        if let Some(sum) = s.checksum {
            e.properties.insert("sha256".into(), json!(sum.hex()));
        }
        parts.push(id_ref(id));
        extra.push(e);
    }
    root.properties.insert("hasPart".into(), Value::Array(parts));
    if let Some(m) = &main {
        root.properties.insert("mainEntity".into(), id_ref(m));
        root.properties.insert("conformsTo".into(), id_ref(WORKFLOW_PROFILE_URI));
    }
    if let Some(t) = &record.tombstone {
        root.properties.insert(TOMBSTONED_PROP.into(), json!(true));
        root.properties.insert(TOMBSTONE_REASON_PROP.into(), json!(t.reason));
    }

    let mut entities = vec![
        Entity::new(METADATA_FILE, &["CreativeWork"])
            .with("about", id_ref(ROOT_ID))
            .with("conformsTo", id_ref(RO_CRATE_SPEC)),
        root,
    ];
    entities.extend(extra);
    WorkflowCrate {
        entities,
        attachments: Default::default(),
        profile: if main.is_some() { WORKFLOW_PROFILE } else { PLAIN_PROFILE }.to_string(),
    }
}
