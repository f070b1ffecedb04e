//! Metadata documents: vocabulary, validation and canonical bytes.
//!
//! A document is an insertion-ordered property map. Validation never throws;
//! it reports one issue per violated rule. Canonical bytes are the
//! key-sorted, whitespace-free JSON rendering of the normalized document
//! (NFC strings, unknown properties renamed under `x_`), and are the input to
//! checksums and the equality basis for federation.

use std::fmt::Write as _;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use unicode_normalization::UnicodeNormalization;

use crate::access::token::TOKEN_PREFIX;
use crate::checksum::Checksum;
use crate::error::{Error, Result};
use crate::pid::{ComponentKind, PersistentIdentifier};

pub const REQUIRED: [&str; 6] = ["name", "description", "kind", "license", "authors", "keywords"];
pub const RECOMMENDED: [&str; 6] = [
    "programming_language",
    "target_machine",
    "input_formats",
    "output_formats",
    "cite_as",
    "derived_from",
];
pub const EXTENSION_PREFIX: &str = "x_";

pub fn is_vocabulary_term(name: &str) -> bool {
    REQUIRED.contains(&name) || RECOMMENDED.contains(&name)
}

pub fn is_extension(name: &str) -> bool {
    name.starts_with(EXTENSION_PREFIX) && name.len() > EXTENSION_PREFIX.len()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Author {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub identifier: Option<String>,
}

impl Author {
    pub fn named(name: impl Into<String>) -> Self {
        Author {
            name: name.into(),
            identifier: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MetadataDocument {
    props: IndexMap<String, Value>,
}

impl MetadataDocument {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_json(bytes: &[u8]) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_slice(bytes)
    }

    pub fn with(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.set(key, value);
        self
    }

    pub fn set(&mut self, key: &str, value: impl Into<Value>) {
        self.props.insert(key.to_string(), value.into());
    }

    pub fn remove(&mut self, key: &str) -> Option<Value> {
        self.props.shift_remove(key)
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.props.get(key)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.props.contains_key(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Value)> {
        self.props.iter()
    }

    pub fn len(&self) -> usize {
        self.props.len()
    }

    pub fn is_empty(&self) -> bool {
        self.props.is_empty()
    }

    fn str_prop(&self, key: &str) -> Option<&str> {
        self.get(key).and_then(Value::as_str)
    }

    pub fn name(&self) -> Option<&str> {
        self.str_prop("name")
    }

    pub fn description(&self) -> Option<&str> {
        self.str_prop("description")
    }

    pub fn license(&self) -> Option<&str> {
        self.str_prop("license")
    }

    pub fn kind(&self) -> Option<ComponentKind> {
        self.str_prop("kind").and_then(ComponentKind::parse_loose)
    }

    pub fn authors(&self) -> Vec<Author> {
        self.get("authors")
            .and_then(|v| serde_json::from_value(v.clone()).ok())
            .unwrap_or_default()
    }

    pub fn keywords(&self) -> Vec<String> {
        string_list(self.get("keywords"))
    }

    pub fn derived_from(&self) -> Vec<String> {
        string_list(self.get("derived_from"))
    }

    pub fn target_machine(&self) -> Vec<String> {
        string_list(self.get("target_machine"))
    }

    /// Shallow merge: `null` removes a property, anything else replaces it.
    pub fn merged(&self, patch: &MetadataDocument) -> MetadataDocument {
        let mut out = self.clone();
        for (k, v) in patch.iter() {
            if v.is_null() {
                out.remove(k);
            } else {
                out.set(k, v.clone());
            }
        }
        out
    }

    /// Renames unknown properties under `x_`, spells `kind` by its long name
    /// and NFC-normalizes every string. Order of properties is preserved.
    pub fn normalized(&self) -> MetadataDocument {
        let mut props = IndexMap::with_capacity(self.props.len());
        for (k, v) in &self.props {
            let key = canonical_property_name(k);
            let mut value = nfc_value(v);
            if key == "kind" {
                if let Some(kind) = value.as_str().and_then(ComponentKind::parse_loose) {
                    value = Value::String(kind.name().to_string());
                }
            }
            props.insert(key, value);
        }
        MetadataDocument { props }
    }
}

fn string_list(v: Option<&Value>) -> Vec<String> {
    match v {
        Some(Value::Array(items)) => items
            .iter()
            .filter_map(|i| i.as_str().map(str::to_string))
            .collect(),
        _ => Vec::new(),
    }
}

/// Name under which a property is stored after canonicalization.
pub fn canonical_property_name(raw: &str) -> String {
    let nfc: String = raw.nfc().collect();
    if is_vocabulary_term(&nfc) || is_extension(&nfc) {
        nfc
    } else {
        format!("{EXTENSION_PREFIX}{}", snake_case(&nfc))
    }
}

fn snake_case(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len() + 4);
    let mut prev_lower = false;
    for ch in raw.chars() {
        if ch.is_uppercase() {
            if prev_lower {
                out.push('_');
            }
            out.extend(ch.to_lowercase());
            prev_lower = false;
        } else if ch.is_alphanumeric() {
            out.push(ch);
            prev_lower = ch.is_lowercase() || ch.is_numeric();
        } else {
            if !out.ends_with('_') {
                out.push('_');
            }
            prev_lower = false;
        }
    }
    let trimmed = out.trim_matches('_');
    if trimmed.is_empty() {
        "property".to_string()
    } else {
        trimmed.to_string()
    }
}

fn nfc_value(v: &Value) -> Value {
    match v {
        Value::String(s) => Value::String(s.nfc().collect()),
        Value::Array(items) => Value::Array(items.iter().map(nfc_value).collect()),
        Value::Object(map) => Value::Object(
            map.iter()
                .map(|(k, v)| (k.nfc().collect(), nfc_value(v)))
                .collect(),
        ),
        other => other.clone(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Issue {
    pub severity: Severity,
    pub property: String,
    pub message: String,
}

impl Issue {
    pub fn error(property: impl Into<String>, message: impl Into<String>) -> Self {
        Issue {
            severity: Severity::Error,
            property: property.into(),
            message: message.into(),
        }
    }

    pub fn warning(property: impl Into<String>, message: impl Into<String>) -> Self {
        Issue {
            severity: Severity::Warning,
            property: property.into(),
            message: message.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub subject: String,
    pub issues: Vec<Issue>,
    pub valid: bool,
}

impl ValidationReport {
    pub fn from_issues(subject: impl Into<String>, issues: Vec<Issue>) -> Self {
        let valid = !issues.iter().any(|i| i.severity == Severity::Error);
        ValidationReport {
            subject: subject.into(),
            issues,
            valid,
        }
    }

    pub fn errors(&self) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(|i| i.severity == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(|i| i.severity == Severity::Warning)
    }

    pub fn has_error_on(&self, property: &str) -> bool {
        self.errors().any(|i| i.property == property)
    }
}

/// Check a document against the registry profile. Pure.
pub fn validate_document(doc: &MetadataDocument) -> ValidationReport {
    validate_document_for(doc, "unregistered")
}

pub fn validate_document_for(doc: &MetadataDocument, subject: &str) -> ValidationReport {
    let mut issues = Vec::new();

    for prop in REQUIRED {
        let Some(value) = doc.get(prop) else {
            issues.push(Issue::error(prop, "required property is missing"));
            continue;
        };
        match prop {
            "name" | "description" | "license" => non_empty_string(prop, value, &mut issues),
            "kind" => match value.as_str() {
                Some(s) if ComponentKind::parse_loose(s).is_some() => {}
                _ => issues.push(Issue::error(prop, "not a known component kind")),
            },
            "authors" => check_authors(value, &mut issues),
            "keywords" => check_string_list(prop, value, false, &mut issues),
            _ => unreachable!(),
        }
    }

    for (name, value) in doc.iter() {
        match name.as_str() {
            n if REQUIRED.contains(&n) => {}
            "programming_language" | "cite_as" => non_empty_string(name, value, &mut issues),
            "target_machine" | "derived_from" => check_pid_list(name, value, &mut issues),
            "input_formats" | "output_formats" => check_media_types(name, value, &mut issues),
            n if is_extension(n) => {}
            n => {
                let renamed = canonical_property_name(n);
                if doc.contains(&renamed) {
                    issues.push(Issue::error(
                        n,
                        format!("unknown property collides with existing {renamed:?}"),
                    ));
                } else {
                    issues.push(Issue::warning(
                        n,
                        format!("unknown property; renamed to {renamed:?} on canonicalization"),
                    ));
                }
            }
        }
        if contains_credential(value) {
            issues.push(Issue::error(
                name.as_str(),
                "value resembles an access token; credentials are never stored in metadata",
            ));
        }
    }

    ValidationReport::from_issues(subject, issues)
}

fn non_empty_string(prop: &str, value: &Value, issues: &mut Vec<Issue>) {
    match value.as_str() {
        Some(s) if !s.trim().is_empty() => {}
        Some(_) => issues.push(Issue::error(prop, "must not be empty")),
        None => issues.push(Issue::error(prop, "must be a string")),
    }
}

fn check_string_list(prop: &str, value: &Value, require_items: bool, issues: &mut Vec<Issue>) {
    let Some(items) = value.as_array() else {
        issues.push(Issue::error(prop, "must be a list of strings"));
        return;
    };
    if require_items && items.is_empty() {
        issues.push(Issue::error(prop, "must not be empty"));
    }
    if items
        .iter()
        .any(|i| i.as_str().is_none_or(|s| s.trim().is_empty()))
    {
        issues.push(Issue::error(prop, "entries must be non-empty strings"));
    }
}

fn check_authors(value: &Value, issues: &mut Vec<Issue>) {
    let Some(items) = value.as_array() else {
        issues.push(Issue::error("authors", "must be a list of authors"));
        return;
    };
    if items.is_empty() {
        issues.push(Issue::error("authors", "at least one author is required"));
    }
    for (i, item) in items.iter().enumerate() {
        let ok = item.as_object().is_some_and(|obj| {
            let name_ok = obj
                .get("name")
                .and_then(Value::as_str)
                .is_some_and(|n| !n.trim().is_empty());
            let id_ok = obj.get("identifier").is_none_or(|id| {
                id.as_str().is_some_and(|s| !s.trim().is_empty())
            });
            let keys_ok = obj.keys().all(|k| k == "name" || k == "identifier");
            name_ok && id_ok && keys_ok
        });
        if !ok {
            issues.push(Issue::error(
                "authors",
                format!("author {i} must be {{name, optional identifier}}"),
            ));
        }
    }
}

fn check_pid_list(prop: &str, value: &Value, issues: &mut Vec<Issue>) {
    check_string_list(prop, value, false, issues);
    for s in string_list(Some(value)) {
        if s.parse::<PersistentIdentifier>().is_err() {
            issues.push(Issue::error(prop, format!("{s:?} is not a persistent identifier")));
        }
    }
}

fn check_media_types(prop: &str, value: &Value, issues: &mut Vec<Issue>) {
    check_string_list(prop, value, false, issues);
    for s in string_list(Some(value)) {
        let well_formed = s
            .split_once('/')
            .is_some_and(|(t, sub)| !t.is_empty() && !sub.is_empty() && !s.contains(char::is_whitespace));
        if !well_formed {
            issues.push(Issue::error(prop, format!("{s:?} is not a media type")));
        }
    }
}

fn contains_credential(v: &Value) -> bool {
    match v {
        Value::String(s) => s.contains(TOKEN_PREFIX),
        Value::Array(items) => items.iter().any(contains_credential),
        Value::Object(map) => map
            .iter()
            .any(|(k, v)| k.contains(TOKEN_PREFIX) || contains_credential(v)),
        _ => false,
    }
}

/// Deterministic bytes for a valid document.
pub fn canonicalize_document(doc: &MetadataDocument) -> Result<Vec<u8>> {
    let report = validate_document(doc);
    if !report.valid {
        return Err(Error::InvalidDocument(Box::new(report)));
    }
    Ok(canonical_bytes_unchecked(doc))
}

/// Canonical rendering without the validity precondition. Used where a
/// stored document must be hashed regardless of profile drift.
pub(crate) fn canonical_bytes_unchecked(doc: &MetadataDocument) -> Vec<u8> {
    let normalized = doc.normalized();
    let object: serde_json::Map<String, Value> = normalized
        .props
        .into_iter()
        .collect();
    canonical_json(&Value::Object(object)).into_bytes()
}

pub fn document_checksum(doc: &MetadataDocument) -> Result<Checksum> {
    canonicalize_document(doc).map(|b| Checksum::of(&b))
}

/// Key-sorted, whitespace-free JSON.
pub fn canonical_json(value: &Value) -> String {
    let mut out = String::new();
    write_canonical(value, &mut out);
    out
}

fn write_canonical(value: &Value, out: &mut String) {
    match value {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(&Value::String(k.clone()), out);
                out.push(':');
                write_canonical(&map[k], out);
            }
            out.push('}');
        }
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(item, out);
            }
            out.push(']');
        }
        leaf => {
            let _ = write!(out, "{leaf}");
        }
    }
}
