//! Versioned record storage and faceted search.

mod index;
mod record;
mod registry;
mod search;
pub mod storage;

pub use index::tokenize;
pub use record::{
    apply_visibility, ComponentRecord, MirrorState, RecordStatus, RecordStub, RecordView, TombstoneNote,
    UsageLinks, VersionSnapshot,
};
pub(crate) use record::content_digest;
pub use registry::{RecordPatch, Registry, RegistryConfig, DEFAULT_ATTACHMENT_THRESHOLD};
pub use search::{Facet, SearchPage, SearchQuery, MAX_PAGE_LIMIT};
pub use storage::{BlobStore, FileStorage, FsBlobStore, MemoryBlobStore, MemoryStorage, StoragePort, Write};
