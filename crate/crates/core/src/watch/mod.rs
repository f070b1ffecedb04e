//! Watchers, viability checks, provenance runs and machine records.
//!
//! Polling is pull-based: each (record, source) pair carries a
//! [`WatchSource`] with its own interval and last observed digest. A poll
//! that observes different bytes marks the record stale; an unreachable
//! source is reported but never changes status.

mod machine;
mod provenance;
mod viability;

use std::collections::HashMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checksum::Checksum;
use crate::clock::Timestamp;
use crate::error::{Error, Result};
use crate::pid::PersistentIdentifier;
use crate::source::{SourceDescriptor, SourceScheme};
use crate::store::{RecordStatus, Registry};

pub use machine::{MachineDescription, MACHINE_MARKER};
pub use provenance::{IngestSummary, ProvenanceEvent, Reference, RunRecord, RunStatus};
pub use viability::{
    CommandOutcome, CommandRunner, ProcessRunner, SandboxConfig, ScriptedRunner, Verdict, ViabilityPool,
    ViabilityResult, CHECK_COMMAND_PROP,
};

pub const DEFAULT_POLL_INTERVAL: i64 = 900;
pub const MIN_POLL_INTERVAL: i64 = 30;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum FetchError {
    #[error("unreachable: {0}")]
    Unreachable(String),
    #[error("not found: {0}")]
    NotFound(String),
}

/// Retrieves artifact bytes for external sources.
pub trait ArtifactFetcher: Send + Sync {
    fn fetch(&self, source: &SourceDescriptor) -> std::result::Result<Vec<u8>, FetchError>;
}

/// In-memory fetcher keyed by locator. Unknown locators are `NotFound`.
#[derive(Default)]
pub struct StaticFetcher {
    entries: Mutex<HashMap<String, Option<Vec<u8>>>>,
}

impl StaticFetcher {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&self, locator: &str, bytes: impl Into<Vec<u8>>) {
        self.entries.lock().expect("fetcher lock").insert(locator.to_string(), Some(bytes.into()));
    }

    pub fn set_unreachable(&self, locator: &str) {
        self.entries.lock().expect("fetcher lock").insert(locator.to_string(), None);
    }

    pub fn remove(&self, locator: &str) {
        self.entries.lock().expect("fetcher lock").remove(locator);
    }
}

impl ArtifactFetcher for StaticFetcher {
    fn fetch(&self, source: &SourceDescriptor) -> std::result::Result<Vec<u8>, FetchError> {
        match self.entries.lock().expect("fetcher lock").get(&source.locator) {
            Some(Some(b)) => Ok(b.clone()),
            Some(None) => Err(FetchError::Unreachable(source.locator.clone())),
            None => Err(FetchError::NotFound(source.locator.clone())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WatchSource {
    pub pid: PersistentIdentifier,
    pub source: SourceDescriptor,
    pub poll_interval: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_polled: Option<Timestamp>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_observed_checksum: Option<Checksum>,
}

impl WatchSource {
    pub fn new(pid: PersistentIdentifier, source: SourceDescriptor) -> Self {
        WatchSource {
            pid,
            last_observed_checksum: source.checksum,
            source,
            poll_interval: DEFAULT_POLL_INTERVAL,
            last_polled: None,
        }
    }

    pub fn is_due(&self, now: Timestamp) -> bool {
        self.last_polled
            .is_none_or(|t| now.unix() - t.unix() >= self.poll_interval.max(MIN_POLL_INTERVAL))
    }

    fn key(&self) -> String {
        watch_key(&self.pid, &self.source.locator)
    }
}

fn watch_key(pid: &PersistentIdentifier, locator: &str) -> String {
    let digest = Checksum::of(locator.as_bytes()).hex();
    format!("watch/{pid}/{}", &digest[..16])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChangeKind {
    Unchanged,
    Drifted,
    Unreachable,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeEvent {
    pub pid: PersistentIdentifier,
    pub locator: String,
    pub kind: ChangeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observed_checksum: Option<Checksum>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationResult {
    pub checked_at: Timestamp,
    pub reachable: bool,
    /// Present only when reachable and a stored checksum exists.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checksum_match: Option<bool>,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WatchCycleReport {
    pub polled: usize,
    pub events: Vec<ChangeEvent>,
}

impl WatchCycleReport {
    pub fn drifted(&self) -> impl Iterator<Item = &ChangeEvent> {
        self.events.iter().filter(|e| e.kind == ChangeKind::Drifted)
    }
}

impl Registry {
    pub(crate) fn fetch_bytes(&self, source: &SourceDescriptor) -> std::result::Result<Vec<u8>, FetchError> {
        if source.scheme == SourceScheme::File {
            let sum = source
                .checksum
                .ok_or_else(|| FetchError::NotFound(source.locator.clone()))?;
            return match self.blobs().get(&sum) {
                Ok(Some(b)) => Ok(b),
                Ok(None) => Err(FetchError::NotFound(source.locator.clone())),
                Err(e) => Err(FetchError::Unreachable(e.to_string())),
            };
        }
        match self.fetcher() {
            Some(f) => f.fetch(source),
            None => Err(FetchError::Unreachable("no artifact fetcher configured".into())),
        }
    }

    /// Watch state for each current source of `pid`.
    pub fn watch_sources(&self, pid: &PersistentIdentifier) -> Result<Vec<WatchSource>> {
        let record = self.raw(pid).ok_or_else(|| Error::not_found(pid))?;
        Ok(record
            .sources
            .iter()
            .map(|s| {
                let fresh = WatchSource::new(pid.clone(), s.clone());
                match self.aux_get(&fresh.key()).and_then(|v| serde_json::from_value::<WatchSource>(v).ok()) {
                    Some(stored) if stored.source == *s => stored,
                    _ => fresh,
                }
            })
            .collect())
    }

    /// Change the interval for one watched source.
    pub fn set_poll_interval(&self, pid: &PersistentIdentifier, locator: &str, secs: i64) -> Result<WatchSource> {
        if secs < MIN_POLL_INTERVAL {
            return Err(Error::InvalidSource(format!("poll interval must be at least {MIN_POLL_INTERVAL} s")));
        }
        let mut ws = self
            .watch_sources(pid)?
            .into_iter()
            .find(|w| w.source.locator == locator)
            .ok_or_else(|| Error::not_found(format!("{pid} has no source {locator:?}")))?;
        ws.poll_interval = secs;
        self.aux_commit(vec![(ws.key(), serde_json::to_value(&ws).expect("watch state serializes"))])?;
        Ok(ws)
    }

    /// Poll one source if due (or forced). Drift marks the record stale and
    /// stores a failed verification; unreachable changes nothing but the
    /// poll time.
    pub fn poll_source(&self, ws: &WatchSource, force: bool) -> Result<Vec<ChangeEvent>> {
        let now = self.now();
        if !force && !ws.is_due(now) {
            return Ok(Vec::new());
        }
        let mut next = ws.clone();
        next.last_polled = Some(now);
        let event = match self.fetch_bytes(&ws.source) {
            Err(e) => {
                tracing::debug!(pid = %ws.pid, locator = %ws.source.locator, error = %e, "source unreachable");
                ChangeEvent {
                    pid: ws.pid.clone(),
                    locator: ws.source.locator.clone(),
                    kind: ChangeKind::Unreachable,
                    observed_checksum: None,
                }
            }
            Ok(bytes) => {
                let observed = Checksum::of(&bytes);
                let kind = match ws.last_observed_checksum {
                    Some(prev) if prev != observed => ChangeKind::Drifted,
                    _ => ChangeKind::Unchanged,
                };
                next.last_observed_checksum = Some(observed);
                ChangeEvent {
                    pid: ws.pid.clone(),
                    locator: ws.source.locator.clone(),
                    kind,
                    observed_checksum: Some(observed),
                }
            }
        };
        if event.kind == ChangeKind::Drifted {
            let verification = VerificationResult {
                checked_at: now,
                reachable: true,
                checksum_match: ws.source.checksum.map(|c| Some(c) == event.observed_checksum),
                detail: format!("{} changed since the last poll", ws.source.locator),
            };
            self.mutate(&ws.pid, |rec| {
                if rec.status == RecordStatus::Active {
                    rec.status = RecordStatus::Stale;
                }
                rec.verification = Some(verification);
                Ok(((), false))
            })?;
            tracing::info!(pid = %ws.pid, locator = %ws.source.locator, "artifact drift detected");
        }
        self.aux_commit(vec![(next.key(), serde_json::to_value(&next).expect("watch state serializes"))])?;
        Ok(vec![event])
    }

    /// Poll every due source of every live record.
    pub fn run_watch_cycle(&self, force: bool) -> Result<WatchCycleReport> {
        let mut report = WatchCycleReport::default();
        for record in self.all_records() {
            if record.is_tombstoned() {
                continue;
            }
            for ws in self.watch_sources(&record.pid)? {
                let events = self.poll_source(&ws, force)?;
                report.polled += events.len();
                report.events.extend(events);
            }
        }
        Ok(report)
    }

    /// On-demand reachability and checksum comparison across all sources.
    /// Stores the result; never changes status.
    pub fn verify_artifact(&self, pid: &PersistentIdentifier) -> Result<VerificationResult> {
        let record = self.raw(pid).ok_or_else(|| Error::not_found(pid))?;
        let mut reachable = false;
        let mut compared = false;
        let mut all_match = true;
        let mut notes = Vec::new();
        for s in &record.sources {
            match self.fetch_bytes(s) {
                Ok(bytes) => {
                    reachable = true;
                    if let Some(stored) = s.checksum {
                        compared = true;
                        if Checksum::of(&bytes) != stored {
                            all_match = false;
                            notes.push(format!("{}: checksum mismatch", s.locator));
                        }
                    }
                }
                Err(e) => notes.push(format!("{}: {e}", s.locator)),
            }
        }
        let result = VerificationResult {
            checked_at: self.now(),
            reachable,
            checksum_match: (reachable && compared).then_some(all_match),
            detail: if notes.is_empty() { "all sources intact".to_string() } else { notes.join("; ") },
        };
        let stored = result.clone();
        self.mutate(pid, |rec| {
            rec.verification = Some(stored);
            Ok(((), false))
        })?;
        Ok(result)
    }
}
