use serde::{Deserialize, Serialize};

use crate::access::{view_level, AccessPolicy, Principal, ViewLevel};
use crate::checksum::Checksum;
use crate::clock::Timestamp;
use crate::document::{canonical_json, MetadataDocument};
use crate::fair::FairnessReport;
use crate::pid::{ComponentKind, PersistentIdentifier};
use crate::source::SourceDescriptor;
use crate::watch::{VerificationResult, ViabilityResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordStatus {
    Active,
    Stale,
    Tombstoned,
}

impl RecordStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RecordStatus::Active => "active",
            RecordStatus::Stale => "stale",
            RecordStatus::Tombstoned => "tombstoned",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TombstoneNote {
    pub pid: PersistentIdentifier,
    pub reason: String,
    pub removed_at: Timestamp,
    pub final_version: u32,
}

/// Back-links from provenance runs.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageLinks {
    pub count: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latest_run: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub runs: Vec<String>,
}

/// Present on records pulled from a sister registry.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MirrorState {
    pub remote: String,
    /// Content digest last accepted from the remote; a local digest that
    /// differs means the mirror was edited here.
    pub synced_content: Checksum,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentRecord {
    pub pid: PersistentIdentifier,
    pub kind: ComponentKind,
    pub document: MetadataDocument,
    pub sources: Vec<SourceDescriptor>,
    pub policy: AccessPolicy,
    pub version: u32,
    pub created_at: Timestamp,
    pub updated_at: Timestamp,
    pub status: RecordStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verification: Option<VerificationResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub viability: Option<ViabilityResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fairness: Option<FairnessReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tombstone: Option<TombstoneNote>,
    #[serde(default)]
    pub usage: UsageLinks,
    /// Crate id of the main workflow entity, when the record came from a crate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub main_entity: Option<String>,
    /// Digest of the original `ro-crate-metadata.json` kept for provenance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin_crate: Option<Checksum>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mirror: Option<MirrorState>,
}

impl ComponentRecord {
    pub fn is_tombstoned(&self) -> bool {
        self.status == RecordStatus::Tombstoned
    }

    pub fn name(&self) -> &str {
        self.document.name().unwrap_or_default()
    }

    /// Digest over canonical document bytes and the source list, the
    /// equality basis used by federation.
    pub fn content_digest(&self) -> Checksum {
        content_digest(&self.document, &self.sources)
    }
}

pub(crate) fn content_digest(doc: &MetadataDocument, sources: &[SourceDescriptor]) -> Checksum {
    let mut bytes = crate::document::canonical_bytes_unchecked(doc);
    for s in sources {
        let line = format!(
            "\n{} {} {} {}",
            s.scheme.as_str(),
            s.locator,
            s.reference.as_deref().unwrap_or("-"),
            s.checksum.map(|c| c.hex()).unwrap_or_else(|| "-".into())
        );
        bytes.extend_from_slice(line.as_bytes());
    }
    Checksum::of(&bytes)
}

/// Immutable snapshot of one record version.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VersionSnapshot {
    pub version: u32,
    pub document: MetadataDocument,
    pub sources: Vec<SourceDescriptor>,
    pub policy: AccessPolicy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub main_entity: Option<String>,
    pub recorded_at: Timestamp,
    /// Digest of this snapshot's content, written once and re-verifiable.
    pub checksum: Checksum,
}

impl VersionSnapshot {
    pub(crate) fn capture(record: &ComponentRecord, at: Timestamp) -> Self {
        let mut snap = VersionSnapshot {
            version: record.version,
            document: record.document.clone(),
            sources: record.sources.clone(),
            policy: record.policy.clone(),
            main_entity: record.main_entity.clone(),
            recorded_at: at,
            checksum: Checksum::of(b""),
        };
        snap.checksum = snap.compute_checksum();
        snap
    }

    pub fn compute_checksum(&self) -> Checksum {
        let mut value = serde_json::to_value(self).expect("snapshot serializes");
        if let Some(obj) = value.as_object_mut() {
            obj.remove("checksum");
        }
        Checksum::of(canonical_json(&value).as_bytes())
    }

    pub fn document_checksum(&self) -> Checksum {
        Checksum::of(&crate::document::canonical_bytes_unchecked(&self.document))
    }
}

/// Existence-only view handed to non-members of `listed` records.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordStub {
    pub pid: PersistentIdentifier,
    pub name: String,
    pub kind: ComponentKind,
    pub organization: String,
    pub status: RecordStatus,
    pub restricted: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "view", rename_all = "lowercase")]
pub enum RecordView {
    Full(Box<ComponentRecord>),
    Stub(RecordStub),
    /// Rendered to callers exactly like an unknown PID.
    Hidden,
}

impl RecordView {
    pub fn pid(&self) -> Option<&PersistentIdentifier> {
        match self {
            RecordView::Full(r) => Some(&r.pid),
            RecordView::Stub(s) => Some(&s.pid),
            RecordView::Hidden => None,
        }
    }

    pub fn full(&self) -> Option<&ComponentRecord> {
        match self {
            RecordView::Full(r) => Some(r),
            _ => None,
        }
    }

    pub fn is_stub(&self) -> bool {
        matches!(self, RecordView::Stub(_))
    }
}

/// Redact `record` for `principal`. Pure.
pub fn apply_visibility(record: &ComponentRecord, principal: &Principal, now: Timestamp) -> RecordView {
    match view_level(&record.policy, principal, now) {
        ViewLevel::Full => RecordView::Full(Box::new(record.clone())),
        ViewLevel::Stub => RecordView::Stub(RecordStub {
            pid: record.pid.clone(),
            name: record.name().to_string(),
            kind: record.kind,
            organization: record.pid.namespace().to_string(),
            status: record.status,
            restricted: true,
        }),
        ViewLevel::Hidden => RecordView::Hidden,
    }
}
