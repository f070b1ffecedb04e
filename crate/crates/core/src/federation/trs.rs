use serde::{Deserialize, Serialize};

use crate::access::Principal;
use crate::clock::Timestamp;
use crate::error::{Error, Result};
use crate::fair::Badge;
use crate::pid::{ComponentKind, PersistentIdentifier};
use crate::store::{
    apply_visibility, content_digest, ComponentRecord, RecordView, Registry, TombstoneNote, VersionSnapshot,
    MAX_PAGE_LIMIT,
};
use crate::watch::FetchError;
use crate::workflow::{extract_abstract_workflow, Dialect};

pub const DESCRIPTOR_TYPE: &str = "abstract";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolVersion {
    pub version_id: String,
    pub descriptor_type: String,
    /// Content digest of the version (document and source list).
    pub checksum: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolListing {
    pub id: String,
    pub toolname: String,
    pub description: String,
    /// Oldest first. Empty for existence stubs.
    pub versions: Vec<ToolVersion>,
    pub organization: String,
    #[serde(rename = "toolClass")]
    pub tool_class: String,
    #[serde(rename = "x-updated-at")]
    pub updated_at: Timestamp,
    #[serde(rename = "x-fair-badge", default, skip_serializing_if = "Option::is_none")]
    pub fair_badge: Option<Badge>,
    #[serde(rename = "x-stub", default, skip_serializing_if = "std::ops::Not::not")]
    pub stub: bool,
    #[serde(rename = "x-tombstoned", default, skip_serializing_if = "std::ops::Not::not")]
    pub tombstoned: bool,
}

impl ToolListing {
    pub fn pid(&self) -> Result<PersistentIdentifier> {
        self.id.parse()
    }

    pub fn latest(&self) -> Option<&ToolVersion> {
        self.versions.last()
    }

    fn from_view(view: &RecordView, record: &ComponentRecord, versions: &[VersionSnapshot]) -> Option<Self> {
        let updated_at = record
            .tombstone
            .as_ref()
            .map_or(record.updated_at, |t| t.removed_at.max(record.updated_at));
        match view {
            RecordView::Hidden => None,
            RecordView::Stub(stub) => Some(ToolListing {
                id: stub.pid.to_string(),
                toolname: stub.name.clone(),
                description: String::new(),
                versions: Vec::new(),
                organization: stub.organization.clone(),
                tool_class: stub.kind.name().to_string(),
                updated_at,
                fair_badge: None,
                stub: true,
                tombstoned: record.is_tombstoned(),
            }),
            RecordView::Full(full) => Some(ToolListing {
                id: full.pid.to_string(),
                toolname: full.name().to_string(),
                description: full.document.description().unwrap_or_default().to_string(),
                versions: versions
                    .iter()
                    .map(|v| ToolVersion {
                        version_id: v.version.to_string(),
                        descriptor_type: DESCRIPTOR_TYPE.to_string(),
                        checksum: content_digest(&v.document, &v.sources).to_string(),
                    })
                    .collect(),
                organization: full.pid.namespace().to_string(),
                tool_class: full.kind.name().to_string(),
                updated_at,
                fair_badge: full.fairness.as_ref().map(|f| f.badge),
                stub: false,
                tombstoned: full.is_tombstoned(),
            }),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolQuery {
    #[serde(default, rename = "toolClass", skip_serializing_if = "Option::is_none")]
    pub kind: Option<ComponentKind>,
    #[serde(default)]
    pub offset: usize,
    #[serde(default = "default_limit")]
    pub limit: usize,
}

fn default_limit() -> usize {
    crate::store::SearchQuery::default().limit
}

impl Default for ToolQuery {
    fn default() -> Self {
        ToolQuery {
            kind: None,
            offset: 0,
            limit: default_limit(),
        }
    }
}

impl ToolQuery {
    pub fn page(offset: usize, limit: usize) -> Self {
        ToolQuery {
            kind: None,
            offset,
            limit,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolPage {
    pub total: usize,
    pub offset: usize,
    pub limit: usize,
    pub tools: Vec<ToolListing>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolDescriptor {
    pub id: String,
    pub version_id: String,
    /// YAML rendering of the abstract workflow; absent for tombstones.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub descriptor: Option<String>,
    pub crate_url: String,
    #[serde(rename = "x-tombstoned", default, skip_serializing_if = "std::ops::Not::not")]
    pub tombstoned: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tombstone: Option<TombstoneNote>,
}

/// Gateway-relative address of a version's crate export.
pub fn crate_url(pid: &PersistentIdentifier, version: u32) -> String {
    format!("/api/v1/records/{pid}/crate?version={version}")
}

impl Registry {
    /// Listings ordered by id. Hidden records are left out entirely and
    /// listed-mode records appear as stubs.
    pub fn trs_list_tools(&self, query: &ToolQuery, principal: &Principal) -> Result<ToolPage> {
        if !(1..=MAX_PAGE_LIMIT).contains(&query.limit) {
            return Err(Error::MalformedQuery(format!(
                "limit must be within 1..={MAX_PAGE_LIMIT}, got {}",
                query.limit
            )));
        }
        let now = self.now();
        let listings: Vec<ToolListing> = self
            .all_records()
            .iter()
            .filter(|r| query.kind.is_none_or(|k| r.kind == k))
            .filter_map(|r| {
                let view = apply_visibility(r, principal, now);
                let versions = match view {
                    RecordView::Full(_) => self.versions_raw(&r.pid),
                    _ => Vec::new(),
                };
                ToolListing::from_view(&view, r, &versions)
            })
            .collect();
        Ok(ToolPage {
            total: listings.len(),
            offset: query.offset,
            limit: query.limit,
            tools: listings.into_iter().skip(query.offset).take(query.limit).collect(),
        })
    }

    /// Abstract descriptor of one stored version.
    pub fn trs_get_tool_version(&self, id: &str, version_id: &str, principal: &Principal) -> Result<ToolDescriptor> {
        let pid: PersistentIdentifier = id.parse().map_err(|_| Error::not_found(id))?;
        let record = self.resolve_full(&pid, principal)?;
        let version_err = || Error::VersionNotFound {
            pid: pid.to_string(),
            version: version_id.to_string(),
        };
        let version: u32 = version_id.parse().map_err(|_| version_err())?;
        let snap = self.version(&pid, version).ok_or_else(version_err)?;
        let mut out = ToolDescriptor {
            id: pid.to_string(),
            version_id: version.to_string(),
            descriptor: None,
            crate_url: crate_url(&pid, version),
            tombstoned: record.is_tombstoned(),
            tombstone: record.tombstone.clone(),
        };
        if record.is_tombstoned() {
            return Ok(out);
        }
        let main = snap
            .main_entity
            .as_deref()
            .ok_or_else(|| Error::not_found(format!("{pid} v{version} has no workflow descriptor")))?;
        let source = snap
            .sources
            .iter()
            .find(|s| s.locator == main)
            .ok_or_else(|| Error::not_found(format!("{pid} v{version}: main file {main:?} is not a source")))?;
        let bytes = self.fetch_bytes(source).map_err(|e| match e {
            FetchError::NotFound(what) => Error::not_found(what),
            FetchError::Unreachable(_) => Error::SourceUnreachable,
        })?;
        let dialect = Dialect::from_path(main).unwrap_or(Dialect::Cwl);
        out.descriptor = Some(extract_abstract_workflow(&bytes, dialect.as_str())?.to_yaml());
        Ok(out)
    }
}
