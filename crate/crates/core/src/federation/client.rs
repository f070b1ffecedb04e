use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};

use super::trs::{ToolPage, ToolQuery};
use crate::access::Principal;
use crate::error::{Error, Result};
use crate::pid::PersistentIdentifier;
use crate::store::{ComponentRecord, RecordView, Registry};

/// Read access to a sister registry. Transport failures map to
/// [`Error::RemoteUnreachable`].
pub trait RemoteClient: Send + Sync {
    fn list_tools(&self, query: &ToolQuery) -> Result<ToolPage>;
    /// Latest full record as the remote serves it publicly.
    fn fetch_record(&self, pid: &PersistentIdentifier) -> Result<ComponentRecord>;
    /// Zipped crate of the latest version.
    fn fetch_crate(&self, pid: &PersistentIdentifier) -> Result<Vec<u8>>;
}

/// A registry in the same process, seen through the reads an anonymous
/// caller could make over HTTP. Serialized responses are retained so tests
/// can scan what crossed the boundary.
pub struct InProcessRemote {
    registry: Arc<Registry>,
    principal: Principal,
    reachable: AtomicBool,
    served: Mutex<Vec<Vec<u8>>>,
}

impl InProcessRemote {
    pub fn new(registry: Arc<Registry>) -> Self {
        InProcessRemote {
            registry,
            principal: Principal::anonymous(),
            reachable: AtomicBool::new(true),
            served: Mutex::default(),
        }
    }

    pub fn set_reachable(&self, reachable: bool) {
        self.reachable.store(reachable, Ordering::SeqCst);
    }

    pub fn served_payloads(&self) -> Vec<Vec<u8>> {
        self.served.lock().expect("payload log poisoned").clone()
    }

    fn gate(&self) -> Result<()> {
        if self.reachable.load(Ordering::SeqCst) {
            Ok(())
        } else {
            Err(Error::RemoteUnreachable(format!("{} is offline", self.registry.namespace())))
        }
    }

    fn serve(&self, bytes: Vec<u8>) -> Vec<u8> {
        self.served.lock().expect("payload log poisoned").push(bytes.clone());
        bytes
    }
}

impl RemoteClient for InProcessRemote {
    fn list_tools(&self, query: &ToolQuery) -> Result<ToolPage> {
        self.gate()?;
        let page = self.registry.trs_list_tools(query, &self.principal)?;
        self.serve(serde_json::to_vec(&page).expect("pages serialize"));
        Ok(page)
    }

    fn fetch_record(&self, pid: &PersistentIdentifier) -> Result<ComponentRecord> {
        self.gate()?;
        match self.registry.resolve(pid, &self.principal)? {
            RecordView::Full(record) => {
                self.serve(serde_json::to_vec(&record).expect("records serialize"));
                Ok(*record)
            }
            _ => Err(Error::not_found(pid)),
        }
    }

    fn fetch_crate(&self, pid: &PersistentIdentifier) -> Result<Vec<u8>> {
        self.gate()?;
        let bytes = self.registry.download_crate(pid, &self.principal, None)?;
        Ok(self.serve(bytes))
    }
}
