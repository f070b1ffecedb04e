use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::{Arc, Mutex, RwLock, RwLockReadGuard};

use serde_json::Value;

use super::index::SearchIndex;
use super::record::{apply_visibility, ComponentRecord, RecordStatus, RecordView, TombstoneNote, VersionSnapshot};
use super::search::{text_score, SearchPage, SearchQuery};
use super::storage::{BlobStore, FileStorage, FsBlobStore, MemoryBlobStore, MemoryStorage, StoragePort, Write};
use crate::access::{authorize, AccessPolicy, Action, DenyReason, Principal, Target, ViewLevel};
use crate::clock::{Clock, Timestamp};
use crate::document::{validate_document_for, Issue, MetadataDocument, ValidationReport};
use crate::error::{Error, Result};
use crate::pid::{is_valid_namespace, next_serial, ComponentKind, PersistentIdentifier};
use crate::source::{SourceDescriptor, SourceScheme};
use crate::watch::ArtifactFetcher;

pub const DEFAULT_ATTACHMENT_THRESHOLD: u64 = 64 * 1024 * 1024;

#[derive(Clone, Debug)]
pub struct RegistryConfig {
    pub namespace: String,
    /// Fetch every source at registration and refuse if none is reachable.
    pub eager_verification: bool,
    /// Crate attachments above this size are stored by reference.
    pub attachment_threshold: u64,
}

impl RegistryConfig {
    pub fn new(namespace: impl Into<String>) -> Self {
        RegistryConfig {
            namespace: namespace.into(),
            eager_verification: false,
            attachment_threshold: DEFAULT_ATTACHMENT_THRESHOLD,
        }
    }
}

/// Changes applied by [`Registry::update`]. Document entries are merged
/// property-by-property; `null` removes a property.
#[derive(Clone, Debug, Default)]
pub struct RecordPatch {
    pub document: Option<MetadataDocument>,
    pub sources: Option<Vec<SourceDescriptor>>,
}

#[derive(Default)]
struct State {
    counters: BTreeMap<(String, ComponentKind), u32>,
    records: BTreeMap<PersistentIdentifier, ComponentRecord>,
    versions: BTreeMap<PersistentIdentifier, Vec<VersionSnapshot>>,
    aux: BTreeMap<String, Value>,
    index: SearchIndex,
}

/// The registry service: records, history, search index and blobs.
///
/// Writes hold the state lock for their whole duration, including the
/// storage commit, so writes never interleave and readers only ever observe
/// committed versions.
pub struct Registry {
    config: RegistryConfig,
    state: RwLock<State>,
    storage: Box<dyn StoragePort>,
    blobs: Arc<dyn BlobStore>,
    clock: Arc<dyn Clock>,
    fetcher: Option<Arc<dyn ArtifactFetcher>>,
    /// Remotes with a sync in flight.
    syncs: Mutex<BTreeSet<String>>,
}

fn counter_key(ns: &str, kind: ComponentKind) -> String {
    format!("counter/{ns}/{}", kind.tag())
}

fn record_key(pid: &PersistentIdentifier) -> String {
    format!("record/{pid}")
}

fn version_key(pid: &PersistentIdentifier, version: u32) -> String {
    format!("version/{pid}/{version:08}")
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("registry values serialize")
}

impl Registry {
    pub fn open(
        config: RegistryConfig,
        storage: Box<dyn StoragePort>,
        blobs: Arc<dyn BlobStore>,
        clock: Arc<dyn Clock>,
    ) -> Result<Self> {
        if !is_valid_namespace(&config.namespace) {
            return Err(Error::InvalidPid(format!("bad namespace {:?}", config.namespace)));
        }
        let mut state = State::default();
        for (key, value) in storage.load()? {
            let corrupt = |e: serde_json::Error| Error::storage(format!("{key}: {e}"));
            let mut parts = key.splitn(3, '/');
            match (parts.next(), parts.next(), parts.next()) {
                (Some("counter"), Some(ns), Some(tag)) => {
                    let kind = ComponentKind::from_tag(tag)
                        .ok_or_else(|| Error::storage(format!("bad counter key {key}")))?;
                    let n: u32 = serde_json::from_value(value).map_err(corrupt)?;
                    state.counters.insert((ns.to_string(), kind), n);
                }
                (Some("record"), Some(_), None) => {
                    let rec: ComponentRecord = serde_json::from_value(value).map_err(corrupt)?;
                    state.index.upsert(&rec);
                    state.records.insert(rec.pid.clone(), rec);
                }
                (Some("version"), Some(pid), Some(_)) => {
                    let pid: PersistentIdentifier = pid.parse()?;
                    let snap: VersionSnapshot = serde_json::from_value(value).map_err(corrupt)?;
                    // keys sort by zero-padded version, so pushes are in order
                    state.versions.entry(pid).or_default().push(snap);
                }
                (Some("aux"), Some(_), _) => {
                    state.aux.insert(key["aux/".len()..].to_string(), value);
                }
                _ => return Err(Error::storage(format!("unknown storage key {key}"))),
            }
        }
        Ok(Registry {
            config,
            state: RwLock::new(state),
            storage,
            blobs,
            clock,
            fetcher: None,
            syncs: Mutex::default(),
        })
    }

    pub fn in_memory(config: RegistryConfig, clock: Arc<dyn Clock>) -> Self {
        Self::open(
            config,
            Box::new(MemoryStorage::new()),
            Arc::new(MemoryBlobStore::new()),
            clock,
        )
        .expect("in-memory registry opens")
    }

    /// File-backed registry rooted at `dir` (log plus `blobs/`).
    pub fn open_dir(config: RegistryConfig, dir: impl AsRef<Path>, clock: Arc<dyn Clock>) -> Result<Self> {
        let dir = dir.as_ref();
        let storage = FileStorage::open(dir)?;
        let blobs = FsBlobStore::open(dir.join("blobs"))?;
        Self::open(config, Box::new(storage), Arc::new(blobs), clock)
    }

    pub fn with_fetcher(mut self, fetcher: Arc<dyn ArtifactFetcher>) -> Self {
        self.fetcher = Some(fetcher);
        self
    }

    pub(crate) fn fetcher(&self) -> Option<&Arc<dyn ArtifactFetcher>> {
        self.fetcher.as_ref()
    }

    pub fn namespace(&self) -> &str {
        &self.config.namespace
    }

    pub fn config(&self) -> &RegistryConfig {
        &self.config
    }

    pub fn now(&self) -> Timestamp {
        self.clock.now()
    }

    pub fn clock(&self) -> Arc<dyn Clock> {
        Arc::clone(&self.clock)
    }

    pub fn blobs(&self) -> &Arc<dyn BlobStore> {
        &self.blobs
    }

    fn read(&self) -> RwLockReadGuard<'_, State> {
        self.state.read().expect("registry state lock poisoned")
    }

    // ---------------------------------------------------------------- minting

    /// Mint the next identifier for (namespace, kind). Durable before return.
    pub fn mint_pid(&self, namespace: &str, kind: ComponentKind) -> Result<PersistentIdentifier> {
        let mut state = self.state.write().expect("registry state lock poisoned");
        let (pid, write) = self.next_pid(&state, namespace, kind)?;
        self.storage.commit(&[write])?;
        state.counters.insert((namespace.to_string(), kind), pid.serial());
        Ok(pid)
    }

    fn next_pid(&self, state: &State, namespace: &str, kind: ComponentKind) -> Result<(PersistentIdentifier, Write)> {
        if namespace != self.config.namespace {
            return Err(Error::NamespaceMismatch {
                requested: namespace.to_string(),
                configured: self.config.namespace.clone(),
            });
        }
        let prev = state
            .counters
            .get(&(namespace.to_string(), kind))
            .copied()
            .unwrap_or(0);
        let serial = next_serial(prev)?;
        let pid = PersistentIdentifier::new(namespace, kind, serial)?;
        Ok((pid, Write::put(counter_key(namespace, kind), Value::from(serial))))
    }

    // ------------------------------------------------------------- registering

    pub fn register(
        &self,
        document: MetadataDocument,
        sources: Vec<SourceDescriptor>,
        policy: AccessPolicy,
        principal: &Principal,
    ) -> Result<ComponentRecord> {
        self.register_with(document, sources, policy, principal, None, None)
    }

    /// Register with record-level fields set by crate import.
    pub(crate) fn register_with(
        &self,
        document: MetadataDocument,
        sources: Vec<SourceDescriptor>,
        policy: AccessPolicy,
        principal: &Principal,
        main_entity: Option<String>,
        origin_crate: Option<crate::checksum::Checksum>,
    ) -> Result<ComponentRecord> {
        let now = self.now();
        let report = validate_document_for(&document, "unregistered");
        if !report.valid {
            return Err(Error::InvalidDocument(Box::new(report)));
        }
        check_policy(&policy)?;
        authorize(principal, Action::Register, Target::Enclave(&policy.enclave), now)
            .into_result()
            .map_err(Error::Unauthorized)?;
        self.check_sources(&sources)?;
        if self.config.eager_verification {
            self.eager_verify(&sources)?;
        }
        let document = document.normalized();
        let kind = document.kind().expect("validated document has a kind");

        let mut state = self.state.write().expect("registry state lock poisoned");
        let (pid, counter_write) = self.next_pid(&state, &self.config.namespace, kind)?;
        let record = ComponentRecord {
            pid: pid.clone(),
            kind,
            document,
            sources,
            policy,
            version: 1,
            created_at: now,
            updated_at: now,
            status: RecordStatus::Active,
            verification: None,
            viability: None,
            fairness: None,
            tombstone: None,
            usage: Default::default(),
            main_entity,
            origin_crate,
            mirror: None,
        };
        self.insert_locked(&mut state, record.clone(), Some(counter_write))?;
        state.counters.insert((pid.namespace().to_string(), kind), pid.serial());
        tracing::info!(pid = %pid, kind = %kind, "registered component");
        Ok(record)
    }

    /// Insert a record under an identifier minted elsewhere (federation).
    pub(crate) fn insert_foreign(&self, record: ComponentRecord) -> Result<()> {
        let mut state = self.state.write().expect("registry state lock poisoned");
        if state.records.contains_key(&record.pid) {
            return Err(Error::StorageFailure(format!("{} already present", record.pid)));
        }
        self.insert_locked(&mut state, record, None)
    }

    fn insert_locked(&self, state: &mut State, record: ComponentRecord, extra: Option<Write>) -> Result<()> {
        let snap = VersionSnapshot::capture(&record, record.updated_at);
        let mut batch: Vec<Write> = extra.into_iter().collect();
        batch.push(Write::put(record_key(&record.pid), to_value(&record)));
        batch.push(Write::put(version_key(&record.pid, record.version), to_value(&snap)));
        self.storage.commit(&batch)?;
        state.index.upsert(&record);
        state.versions.insert(record.pid.clone(), vec![snap]);
        state.records.insert(record.pid.clone(), record);
        Ok(())
    }

    fn check_sources(&self, sources: &[SourceDescriptor]) -> Result<()> {
        if sources.is_empty() {
            return Err(Error::InvalidSource("at least one source is required".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for s in sources {
            s.check().map_err(Error::InvalidSource)?;
            if !seen.insert(s.locator.as_str()) {
                return Err(Error::InvalidSource(format!("locator {:?} listed twice", s.locator)));
            }
            if s.scheme == SourceScheme::File {
                let sum = s.checksum.expect("checked above");
                if !self.blobs.contains(&sum) {
                    return Err(Error::InvalidSource(format!(
                        "file source {:?} is not stored in this registry",
                        s.locator
                    )));
                }
            }
        }
        Ok(())
    }

    fn eager_verify(&self, sources: &[SourceDescriptor]) -> Result<()> {
        let reachable = sources.iter().any(|s| {
            if s.scheme == SourceScheme::File {
                return true;
            }
            self.fetcher.as_ref().is_some_and(|f| f.fetch(s).is_ok())
        });
        if reachable {
            Ok(())
        } else {
            Err(Error::SourceUnreachable)
        }
    }

    // ---------------------------------------------------------------- mutation

    /// Apply `f` to a copy of the record and commit it. When `f` returns
    /// `true` the change is a new version with its own snapshot.
    pub(crate) fn mutate<R>(
        &self,
        pid: &PersistentIdentifier,
        f: impl FnOnce(&mut ComponentRecord) -> Result<(R, bool)>,
    ) -> Result<R> {
        let mut state = self.state.write().expect("registry state lock poisoned");
        let current = state.records.get(pid).ok_or_else(|| Error::not_found(pid))?;
        let mut next = current.clone();
        let (out, new_version) = f(&mut next)?;
        let mut batch = Vec::with_capacity(2);
        let mut snap = None;
        if new_version {
            let now = self.now();
            next.version = current.version + 1;
            next.updated_at = now.max(current.updated_at);
            let s = VersionSnapshot::capture(&next, next.updated_at);
            batch.push(Write::put(version_key(pid, next.version), to_value(&s)));
            snap = Some(s);
        }
        batch.push(Write::put(record_key(pid), to_value(&next)));
        self.storage.commit(&batch)?;
        state.index.upsert(&next);
        if let Some(s) = snap {
            state.versions.entry(pid.clone()).or_default().push(s);
        }
        state.records.insert(pid.clone(), next);
        Ok(out)
    }

    /// Looks a record up for a mutating call, hiding records the caller may
    /// not see and refusing tombstoned ones.
    fn writable(&self, pid: &PersistentIdentifier, principal: &Principal) -> Result<ComponentRecord> {
        let record = self.raw(pid).ok_or_else(|| Error::not_found(pid))?;
        if crate::access::view_level(&record.policy, principal, self.now()) == ViewLevel::Hidden {
            return Err(Error::not_found(pid));
        }
        Ok(record)
    }

    pub fn update(&self, pid: &PersistentIdentifier, patch: RecordPatch, principal: &Principal) -> Result<ComponentRecord> {
        let record = self.writable(pid, principal)?;
        if record.is_tombstoned() {
            return Err(Error::Tombstoned(pid.to_string()));
        }
        authorize(principal, Action::Update, Target::Record(&record.policy), self.now())
            .into_result()
            .map_err(Error::Unauthorized)?;
        let document = match &patch.document {
            Some(p) => record.document.merged(p),
            None => record.document.clone(),
        };
        let mut report = validate_document_for(&document, &pid.to_string());
        if document.kind().is_some_and(|k| k != record.kind) {
            report.issues.push(Issue::error("kind", "component kind is immutable after registration"));
            report.valid = false;
        }
        if !report.valid {
            return Err(Error::InvalidDocument(Box::new(report)));
        }
        if let Some(sources) = &patch.sources {
            self.check_sources(sources)?;
        }
        let document = document.normalized();
        self.mutate(pid, |rec| {
            rec.document = document;
            if let Some(sources) = patch.sources {
                rec.sources = sources;
                if rec.status == RecordStatus::Stale {
                    rec.status = RecordStatus::Active;
                }
            }
            Ok(((), true))
        })?;
        tracing::info!(pid = %pid, "updated component");
        Ok(self.raw(pid).expect("record just written"))
    }

    pub fn tombstone(&self, pid: &PersistentIdentifier, reason: &str, principal: &Principal) -> Result<TombstoneNote> {
        let record = self.writable(pid, principal)?;
        if record.is_tombstoned() {
            return Err(Error::AlreadyTombstoned(pid.to_string()));
        }
        authorize(principal, Action::Tombstone, Target::Record(&record.policy), self.now())
            .into_result()
            .map_err(Error::Unauthorized)?;
        let note = self.tombstone_unchecked(pid, reason)?;
        tracing::info!(pid = %pid, "tombstoned component");
        Ok(note)
    }

    pub(crate) fn tombstone_unchecked(&self, pid: &PersistentIdentifier, reason: &str) -> Result<TombstoneNote> {
        let now = self.now();
        self.mutate(pid, |rec| {
            let note = TombstoneNote {
                pid: rec.pid.clone(),
                reason: reason.to_string(),
                removed_at: now,
                final_version: rec.version,
            };
            rec.status = RecordStatus::Tombstoned;
            rec.tombstone = Some(note.clone());
            Ok((note, false))
        })
    }

    pub fn set_embargo(&self, pid: &PersistentIdentifier, until: Timestamp, principal: &Principal) -> Result<AccessPolicy> {
        let record = self.writable(pid, principal)?;
        let now = self.now();
        // Policy changes need the same standing as tombstoning: owner or curator.
        authorize(principal, Action::Tombstone, Target::Record(&record.policy), now)
            .into_result()
            .map_err(Error::Unauthorized)?;
        if until <= now {
            return Err(Error::PastTimestamp);
        }
        if record.is_tombstoned() {
            return Err(Error::Tombstoned(pid.to_string()));
        }
        self.mutate(pid, |rec| {
            rec.policy.embargo_until = Some(until);
            Ok((rec.policy.clone(), true))
        })
    }

    // ------------------------------------------------------------------- reads

    /// Latest state without any visibility filtering.
    pub fn raw(&self, pid: &PersistentIdentifier) -> Option<ComponentRecord> {
        self.read().records.get(pid).cloned()
    }

    pub fn contains(&self, pid: &PersistentIdentifier) -> bool {
        self.read().records.contains_key(pid)
    }

    pub fn resolve(&self, pid: &PersistentIdentifier, principal: &Principal) -> Result<RecordView> {
        let record = self.raw(pid).ok_or_else(|| Error::not_found(pid))?;
        match apply_visibility(&record, principal, self.now()) {
            RecordView::Hidden => Err(Error::not_found(pid)),
            view => Ok(view),
        }
    }

    /// Resolve and require the full view.
    pub fn resolve_full(&self, pid: &PersistentIdentifier, principal: &Principal) -> Result<ComponentRecord> {
        match self.resolve(pid, principal)? {
            RecordView::Full(r) => Ok(*r),
            _ => Err(Error::Unauthorized(DenyReason::EnclaveMismatch)),
        }
    }

    pub fn list_versions(&self, pid: &PersistentIdentifier, principal: &Principal) -> Result<Vec<VersionSnapshot>> {
        self.resolve_full(pid, principal)?;
        Ok(self.versions_raw(pid))
    }

    pub(crate) fn versions_raw(&self, pid: &PersistentIdentifier) -> Vec<VersionSnapshot> {
        self.read().versions.get(pid).cloned().unwrap_or_default()
    }

    pub fn version(&self, pid: &PersistentIdentifier, version: u32) -> Option<VersionSnapshot> {
        self.read()
            .versions
            .get(pid)
            .and_then(|vs| vs.iter().find(|v| v.version == version).cloned())
    }

    /// Every record, unfiltered, in PID order.
    pub fn all_records(&self) -> Vec<ComponentRecord> {
        self.read().records.values().cloned().collect()
    }

    pub fn search(&self, query: &SearchQuery, principal: &Principal) -> Result<SearchPage> {
        query.check()?;
        let now = self.now();
        let state = self.read();
        let mut candidates = state.index.facet_candidates(&query.facets);
        if let Some(tokens) = query.tokens().filter(|t| !t.is_empty()) {
            let textual = state.index.text_candidates(&tokens);
            candidates.retain(|p| textual.contains(p));
        }
        let mut hits: Vec<(u32, RecordView)> = Vec::new();
        for pid in candidates {
            let record = &state.records[&pid];
            if record.is_tombstoned() && !query.include_tombstoned {
                continue;
            }
            let view = apply_visibility(record, principal, now);
            let score = match &view {
                RecordView::Hidden => None,
                RecordView::Stub(_) => {
                    if query.facets.keys().all(|f| f.visible_on_stub()) {
                        text_score(record, query, true)
                    } else {
                        None
                    }
                }
                RecordView::Full(_) => text_score(record, query, false),
            };
            if let Some(score) = score {
                hits.push((score, view));
            }
        }
        // candidates iterate in PID order and the sort is stable
        hits.sort_by_key(|h| std::cmp::Reverse(h.0));
        let total = hits.len();
        let items: Vec<RecordView> = hits
            .into_iter()
            .skip(query.offset)
            .take(query.limit)
            .map(|(_, v)| v)
            .collect();
        let end = query.offset.saturating_add(items.len());
        Ok(SearchPage {
            total,
            next_offset: (end < total).then_some(end),
            items,
        })
    }

    /// Search self-test: would an exact-name query surface this record?
    pub(crate) fn name_query_finds(&self, record: &ComponentRecord) -> bool {
        let query = SearchQuery::text(record.name()).with_tombstoned();
        let state = self.read();
        let indexed = match query.tokens().filter(|t| !t.is_empty()) {
            Some(tokens) => state.index.text_candidates(&tokens).contains(&record.pid),
            None => state.index.all().any(|p| *p == record.pid),
        };
        indexed && text_score(record, &query, false).is_some()
    }

    /// Bytes of an artifact stored in this registry. Tombstoned records
    /// answer `Gone` while their metadata stays resolvable.
    pub fn fetch_artifact(&self, pid: &PersistentIdentifier, locator: &str, principal: &Principal) -> Result<Vec<u8>> {
        let record = self.resolve_full(pid, principal)?;
        if record.is_tombstoned() {
            return Err(Error::Gone {
                pid: pid.to_string(),
                metadata: None,
            });
        }
        let source = record
            .sources
            .iter()
            .find(|s| s.locator == locator)
            .ok_or_else(|| Error::not_found(format!("{pid} has no artifact {locator:?}")))?;
        if source.scheme != SourceScheme::File {
            return Err(Error::not_found(format!(
                "{locator:?} is held externally ({}); fetch it from its repository",
                source.scheme
            )));
        }
        let sum = source.checksum.expect("file sources carry checksums");
        self.blobs
            .get(&sum)?
            .ok_or_else(|| Error::not_found(format!("blob {sum} missing")))
    }

    /// Recompute every stored snapshot digest; returns versions that no
    /// longer match what was written.
    pub fn verify_history(&self) -> Vec<(PersistentIdentifier, u32)> {
        let state = self.read();
        let mut bad = Vec::new();
        for (pid, versions) in &state.versions {
            for (i, v) in versions.iter().enumerate() {
                if v.version as usize != i + 1 || v.compute_checksum() != v.checksum {
                    bad.push((pid.clone(), v.version));
                }
            }
        }
        bad
    }

    /// Claim the single sync slot for `remote`; `false` if already taken.
    pub(crate) fn claim_sync(&self, remote: &str) -> bool {
        self.syncs.lock().expect("sync set poisoned").insert(remote.to_string())
    }

    pub(crate) fn release_sync(&self, remote: &str) {
        self.syncs.lock().expect("sync set poisoned").remove(remote);
    }

    // ------------------------------------------------------- auxiliary records

    pub(crate) fn aux_get(&self, key: &str) -> Option<Value> {
        self.read().aux.get(key).cloned()
    }

    pub(crate) fn aux_range(&self, prefix: &str) -> Vec<(String, Value)> {
        self.read()
            .aux
            .range(prefix.to_string()..)
            .take_while(|(k, _)| k.starts_with(prefix))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect()
    }

    /// Commit auxiliary keys (watch state, runs, sync cursors) atomically.
    pub(crate) fn aux_commit(&self, entries: Vec<(String, Value)>) -> Result<()> {
        let mut state = self.state.write().expect("registry state lock poisoned");
        let batch: Vec<Write> = entries
            .iter()
            .map(|(k, v)| Write::put(format!("aux/{k}"), v.clone()))
            .collect();
        self.storage.commit(&batch)?;
        for (k, v) in entries {
            state.aux.insert(k, v);
        }
        Ok(())
    }
}

fn check_policy(policy: &AccessPolicy) -> Result<()> {
    policy.check().map_err(|msg| {
        Error::InvalidDocument(Box::new(ValidationReport::from_issues(
            "unregistered",
            vec![Issue::error("policy", msg)],
        )))
    })
}
