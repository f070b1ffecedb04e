//! Registry core for FAIR workflow components on HPC sites.
//!
//! The crate is organised around a single [`Registry`] value that owns the
//! durable record store, the search index and the artifact blob store. The
//! remaining modules are services layered on top of it:
//!
//! - [`pid`], [`document`], [`checksum`], [`source`]: identifiers and the
//!   metadata model every other module consumes.
//! - [`access`]: tokens, principals, enclave authorization and visibility.
//! - [`store`]: versioned records, tombstones, faceted search.
//! - [`rocrate`] and [`workflow`]: Workflow-RO-Crate interchange and abstract
//!   workflow descriptors.
//! - [`federation`]: TRS-style listing and pull-based sync with sister hubs.
//! - [`watch`]: drift detection, viability checks, provenance and machines.
//! - [`fair`]: the twelve-check FAIR rubric and badges.

pub mod access;
pub mod checksum;
pub mod clock;
pub mod document;
pub mod error;
pub mod fair;
pub mod federation;
pub mod pid;
pub mod rocrate;
pub mod source;
pub mod store;
pub mod watch;
pub mod workflow;

pub use access::{AccessPolicy, AuthToken, Principal, Role, Visibility};
pub use checksum::{compute_checksum, Checksum};
pub use clock::{Clock, ManualClock, SystemClock, Timestamp};
pub use document::{canonicalize_document, validate_document, MetadataDocument, ValidationReport};
pub use error::{Error, Result};
pub use pid::{ComponentKind, PersistentIdentifier};
pub use source::{SourceDescriptor, SourceScheme};
pub use store::{ComponentRecord, RecordStatus, Registry, RegistryConfig, SearchPage, SearchQuery};
