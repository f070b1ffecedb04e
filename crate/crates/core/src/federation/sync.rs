use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::client::RemoteClient;
use super::trs::{ToolListing, ToolQuery};
use crate::access::{authorize, AccessPolicy, Action, Principal, Target};
use crate::checksum::Checksum;
use crate::clock::Timestamp;
use crate::document::validate_document_for;
use crate::error::{Error, Result};
use crate::pid::{is_valid_namespace, PersistentIdentifier};
use crate::rocrate::{read_zip, ZipLimits};
use crate::source::SourceScheme;
use crate::store::{ComponentRecord, MirrorState, RecordStatus, Registry, TombstoneNote, MAX_PAGE_LIMIT};

pub const DEFAULT_MIRROR_ENCLAVE: &str = "federation";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Trust {
    #[default]
    ReadOnly,
    Bidirectional,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemoteRegistry {
    pub name: String,
    pub base_url: String,
    pub namespace: String,
    #[serde(default)]
    pub trust: Trust,
    /// Starting point when no cursor has been stored locally yet.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_sync_cursor: Option<String>,
    /// Enclave that owns mirrored records.
    #[serde(default = "default_mirror_enclave")]
    pub mirror_enclave: String,
}

fn default_mirror_enclave() -> String {
    DEFAULT_MIRROR_ENCLAVE.to_string()
}

impl RemoteRegistry {
    pub fn new(name: impl Into<String>, base_url: impl Into<String>, namespace: impl Into<String>) -> Self {
        RemoteRegistry {
            name: name.into(),
            base_url: base_url.into(),
            namespace: namespace.into(),
            trust: Trust::default(),
            last_sync_cursor: None,
            mirror_enclave: default_mirror_enclave(),
        }
    }

    fn owner(&self) -> String {
        format!("federation:{}", self.name)
    }
}

/// Position in a remote's (updated_at, pid) ordering. Rendered as
/// `<rfc3339>|<pid>`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct SyncCursor {
    pub updated_at: Timestamp,
    pub pid: PersistentIdentifier,
}

impl fmt::Display for SyncCursor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}|{}", self.updated_at, self.pid)
    }
}

impl FromStr for SyncCursor {
    type Err = Error;

    fn from_str(raw: &str) -> Result<Self> {
        let bad = || Error::MalformedQuery(format!("bad sync cursor {raw:?}"));
        let (ts, pid) = raw.split_once('|').ok_or_else(bad)?;
        Ok(SyncCursor {
            updated_at: Timestamp::parse_rfc3339(ts).ok_or_else(bad)?,
            pid: pid.parse().map_err(|_| bad())?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Resolution {
    RemoteKept,
    LocalKept,
    Forked,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conflict {
    pub pid: PersistentIdentifier,
    pub resolution: Resolution,
    /// Local record preserving the losing edit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fork: Option<PersistentIdentifier>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyncReport {
    pub remote: String,
    pub pulled: u64,
    pub created: u64,
    pub updated: u64,
    pub conflicts: Vec<Conflict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub new_cursor: Option<String>,
}

/// What to do with a local record given the remote's digest for it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reconciliation {
    NoOp,
    /// Clean mirror: take the remote content.
    Adopt,
    /// The local registry owns the namespace.
    KeepLocal,
    /// Remote wins, but local edits are first preserved as a fork.
    ForkThenAdopt,
}

/// Pure conflict rule: equal content is a no-op, otherwise the registry
/// whose namespace prefixes the PID wins.
pub fn reconcile(local_namespace: &str, local: &ComponentRecord, remote_digest: &Checksum) -> Reconciliation {
    let digest = local.content_digest();
    if digest == *remote_digest {
        return Reconciliation::NoOp;
    }
    if local.pid.namespace() == local_namespace {
        return Reconciliation::KeepLocal;
    }
    match &local.mirror {
        Some(m) if m.synced_content == digest => Reconciliation::Adopt,
        _ => Reconciliation::ForkThenAdopt,
    }
}

struct SyncSlot<'a> {
    registry: &'a Registry,
    remote: &'a str,
}

impl Drop for SyncSlot<'_> {
    fn drop(&mut self) {
        self.registry.release_sync(self.remote);
    }
}

fn cursor_key(remote: &str) -> String {
    format!("sync/{remote}/cursor")
}

fn log_prefix(remote: &str) -> String {
    format!("sync/{remote}/log/")
}

impl Registry {
    /// Pull everything the remote changed since the stored cursor.
    pub fn sync_pull(
        &self,
        remote: &RemoteRegistry,
        client: &dyn RemoteClient,
        principal: &Principal,
    ) -> Result<SyncReport> {
        if !is_valid_namespace(&remote.name) {
            return Err(Error::MalformedQuery(format!("bad remote name {:?}", remote.name)));
        }
        if remote.namespace == self.namespace() {
            return Err(Error::MalformedQuery(format!(
                "remote {} shares the local namespace {}",
                remote.name, remote.namespace
            )));
        }
        authorize(principal, Action::Sync, Target::Enclave(&remote.mirror_enclave), self.now())
            .into_result()
            .map_err(Error::Unauthorized)?;
        if !self.claim_sync(&remote.name) {
            return Err(Error::SyncInProgress(remote.name.clone()));
        }
        let _slot = SyncSlot {
            registry: self,
            remote: &remote.name,
        };

        let start = match self.sync_cursor(&remote.name).or_else(|| remote.last_sync_cursor.clone()) {
            Some(raw) => Some(raw.parse::<SyncCursor>()?),
            None => None,
        };
        let mut due: Vec<(SyncCursor, ToolListing)> = Vec::new();
        for listing in list_all(client)? {
            let Ok(pid) = listing.pid() else { continue };
            if listing.stub || (pid.namespace() != remote.namespace && pid.namespace() != self.namespace()) {
                continue;
            }
            let cursor = SyncCursor {
                updated_at: listing.updated_at,
                pid,
            };
            // Timestamps have whole-second precision, so the cursor's own
            // second is re-examined: a later edit may share it.
            match &start {
                Some(s) if cursor.updated_at < s.updated_at => {}
                Some(s) if cursor <= *s && self.already_reflected(&listing, &cursor.pid) => {}
                _ => due.push((cursor, listing)),
            }
        }
        due.sort_by(|a, b| a.0.cmp(&b.0));

        let mut report = SyncReport {
            remote: remote.name.clone(),
            pulled: 0,
            created: 0,
            updated: 0,
            conflicts: Vec::new(),
            new_cursor: start.as_ref().map(ToString::to_string),
        };
        for (cursor, listing) in due {
            report.pulled += 1;
            if let Err(e) = self.pull_one(remote, client, &listing, &cursor.pid, principal, &mut report) {
                tracing::warn!(remote = %remote.name, pid = %cursor.pid, error = %e, "sync stopped early");
                self.log_sync(&report)?;
                return Err(Error::PartialFailure {
                    report: Box::new(report),
                    detail: e.to_string(),
                });
            }
            if start.as_ref().is_none_or(|s| cursor > *s) {
                report.new_cursor = Some(cursor.to_string());
            }
        }
        self.log_sync(&report)?;
        tracing::info!(
            remote = %remote.name,
            pulled = report.pulled,
            created = report.created,
            updated = report.updated,
            conflicts = report.conflicts.len(),
            "sync finished"
        );
        Ok(report)
    }

    /// True when a listing at or before the cursor needs no work: an echo
    /// of our own record, or a mirror already holding the listed content.
    fn already_reflected(&self, listing: &ToolListing, pid: &PersistentIdentifier) -> bool {
        if pid.namespace() == self.namespace() {
            return true;
        }
        let Some(local) = self.raw(pid) else {
            return false;
        };
        if local.is_tombstoned() || listing.tombstoned {
            return local.is_tombstoned() == listing.tombstoned;
        }
        let remote_digest: Option<Checksum> = listing.latest().and_then(|v| v.checksum.parse().ok());
        remote_digest == Some(local.content_digest())
    }

    pub fn sync_cursor(&self, remote: &str) -> Option<String> {
        self.aux_get(&cursor_key(remote)).and_then(|v| v.as_str().map(str::to_string))
    }

    /// Append-only log of past syncs with `remote`, oldest first.
    pub fn sync_log(&self, remote: &str) -> Vec<SyncReport> {
        self.aux_range(&log_prefix(remote))
            .into_iter()
            .filter_map(|(_, v)| serde_json::from_value(v).ok())
            .collect()
    }

    fn log_sync(&self, report: &SyncReport) -> Result<()> {
        let seq = self.aux_range(&log_prefix(&report.remote)).len();
        let mut entries = vec![(
            format!("{}{seq:010}", log_prefix(&report.remote)),
            serde_json::to_value(report).expect("reports serialize"),
        )];
        if let Some(c) = &report.new_cursor {
            entries.push((cursor_key(&report.remote), Value::from(c.clone())));
        }
        self.aux_commit(entries)
    }

    fn pull_one(
        &self,
        remote: &RemoteRegistry,
        client: &dyn RemoteClient,
        listing: &ToolListing,
        pid: &PersistentIdentifier,
        principal: &Principal,
        report: &mut SyncReport,
    ) -> Result<()> {
        let remote_digest: Option<Checksum> = listing.latest().and_then(|v| v.checksum.parse().ok());
        let local = self.raw(pid);

        if pid.namespace() == self.namespace() {
            // our own record echoed back by the remote
            if let (Some(local), Some(digest)) = (local, remote_digest) {
                if !local.is_tombstoned() && reconcile(self.namespace(), &local, &digest) == Reconciliation::KeepLocal {
                    report.conflicts.push(Conflict {
                        pid: pid.clone(),
                        resolution: Resolution::LocalKept,
                        fork: None,
                    });
                }
            }
            return Ok(());
        }

        let Some(local) = local else {
            // withdrawn records are mirrored too, metadata only
            let fetched = self.fetch_remote(client, pid)?;
            self.insert_foreign(self.mirror_of(remote, fetched))?;
            report.created += 1;
            return Ok(());
        };
        if local.is_tombstoned() {
            return Ok(());
        }
        if listing.tombstoned {
            self.tombstone_unchecked(pid, &format!("withdrawn at origin ({})", remote.name))?;
            report.updated += 1;
            return Ok(());
        }
        let Some(digest) = remote_digest else {
            return Err(Error::MalformedQuery(format!("listing for {pid} carries no version checksum")));
        };
        match reconcile(self.namespace(), &local, &digest) {
            Reconciliation::NoOp | Reconciliation::KeepLocal => Ok(()),
            Reconciliation::Adopt => {
                let fetched = self.fetch_remote(client, pid)?;
                self.adopt(remote, fetched)?;
                report.updated += 1;
                Ok(())
            }
            Reconciliation::ForkThenAdopt => {
                let fetched = self.fetch_remote(client, pid)?;
                let fork = self.fork_local_edit(&local, principal);
                if let Err(e) = &fork {
                    tracing::warn!(pid = %pid, error = %e, "local edit could not be forked");
                }
                self.adopt(remote, fetched)?;
                report.updated += 1;
                let fork = fork.ok();
                report.conflicts.push(Conflict {
                    pid: pid.clone(),
                    resolution: if fork.is_some() { Resolution::Forked } else { Resolution::RemoteKept },
                    fork,
                });
                Ok(())
            }
        }
    }

    /// Remote record plus any file artifacts, stored locally.
    fn fetch_remote(&self, client: &dyn RemoteClient, pid: &PersistentIdentifier) -> Result<ComponentRecord> {
        let record = client.fetch_record(pid)?;
        if record.pid != *pid || record.kind != pid.kind() {
            return Err(Error::MalformedQuery(format!("remote answered {} for {pid}", record.pid)));
        }
        let report = validate_document_for(&record.document, &pid.to_string());
        if !report.valid {
            return Err(Error::InvalidDocument(Box::new(report)));
        }
        let files: Vec<_> = record.sources.iter().filter(|s| s.scheme == SourceScheme::File).collect();
        if !files.is_empty() && !record.is_tombstoned() {
            let krate = read_zip(&client.fetch_crate(pid)?, ZipLimits::default())?;
            for s in files {
                let expected = s.checksum.ok_or_else(|| Error::InvalidSource(format!("{:?} has no checksum", s.locator)))?;
                let attachment = krate
                    .attachments
                    .get(&s.locator)
                    .ok_or_else(|| Error::Packaging(format!("crate for {pid} lacks {:?}", s.locator)))?;
                let stored = self.blobs().put(&attachment.read()?)?;
                if stored != expected {
                    return Err(Error::Packaging(format!("{:?} of {pid} does not match its checksum", s.locator)));
                }
            }
        }
        Ok(record)
    }

    fn mirror_of(&self, remote: &RemoteRegistry, fetched: ComponentRecord) -> ComponentRecord {
        let now = self.now();
        let synced_content = fetched.content_digest();
        let tombstone = fetched.is_tombstoned().then(|| TombstoneNote {
            pid: fetched.pid.clone(),
            reason: format!("withdrawn at origin ({})", remote.name),
            removed_at: now,
            final_version: 1,
        });
        ComponentRecord {
            pid: fetched.pid,
            kind: fetched.kind,
            document: fetched.document,
            sources: fetched.sources,
            policy: AccessPolicy::public(remote.mirror_enclave.clone(), remote.owner()),
            version: 1,
            created_at: now,
            updated_at: now,
            status: if tombstone.is_some() {
                RecordStatus::Tombstoned
            } else {
                mirrored_status(fetched.status)
            },
            verification: None,
            viability: None,
            fairness: None,
            tombstone,
            usage: Default::default(),
            main_entity: fetched.main_entity,
            origin_crate: None,
            mirror: Some(MirrorState {
                remote: remote.name.clone(),
                synced_content,
            }),
        }
    }

    fn adopt(&self, remote: &RemoteRegistry, fetched: ComponentRecord) -> Result<()> {
        let synced_content = fetched.content_digest();
        self.mutate(&fetched.pid, |rec| {
            rec.document = fetched.document;
            rec.sources = fetched.sources;
            rec.main_entity = fetched.main_entity;
            rec.status = mirrored_status(fetched.status);
            rec.mirror = Some(MirrorState {
                remote: remote.name.clone(),
                synced_content,
            });
            Ok(((), true))
        })
    }

    /// Copy the locally edited mirror to a fresh local PID linked back to it.
    fn fork_local_edit(&self, local: &ComponentRecord, principal: &Principal) -> Result<PersistentIdentifier> {
        let mut document = local.document.clone();
        let mut lineage = document.derived_from();
        let origin = local.pid.to_string();
        if !lineage.contains(&origin) {
            lineage.push(origin);
        }
        document.set("derived_from", serde_json::json!(lineage));
        let fork = self.register_with(
            document,
            local.sources.clone(),
            local.policy.clone(),
            principal,
            local.main_entity.clone(),
            None,
        )?;
        tracing::info!(origin = %local.pid, fork = %fork.pid, "forked local edit of mirrored record");
        Ok(fork.pid)
    }
}

fn mirrored_status(remote: RecordStatus) -> RecordStatus {
    match remote {
        RecordStatus::Stale => RecordStatus::Stale,
        _ => RecordStatus::Active,
    }
}

fn list_all(client: &dyn RemoteClient) -> Result<Vec<ToolListing>> {
    let mut out = Vec::new();
    loop {
        let page = client.list_tools(&ToolQuery::page(out.len(), MAX_PAGE_LIMIT))?;
        let done = page.tools.is_empty() || out.len() + page.tools.len() >= page.total;
        out.extend(page.tools);
        if done {
            return Ok(out);
        }
    }
}
