//! Inter-registry integration: a TRS-style read surface and a pull-based
//! sync engine that mirrors public records of sister registries.
//!
//! Records are compared by [`ComponentRecord::content_digest`]. The registry
//! whose namespace prefixes a PID is authoritative for it; local edits that
//! would be overwritten are preserved as forks.
//!
//! [`ComponentRecord::content_digest`]: crate::store::ComponentRecord::content_digest

mod client;
mod sync;
mod trs;

pub use client::{InProcessRemote, RemoteClient};
pub use sync::{
    reconcile, Conflict, Reconciliation, RemoteRegistry, Resolution, SyncCursor, SyncReport, Trust,
    DEFAULT_MIRROR_ENCLAVE,
};
pub use trs::{crate_url, ToolDescriptor, ToolListing, ToolPage, ToolQuery, ToolVersion, DESCRIPTOR_TYPE};
