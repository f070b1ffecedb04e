//! Storage port: an ordered key-value layout committed in atomic batches.
//!
//! `FileStorage` is an append-only log. Each line holds one batch and a
//! digest of that batch; a torn or corrupt tail is discarded on open, so a
//! batch is either fully present after restart or absent.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions, TryLockError};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write as _};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::checksum::Checksum;
use crate::document::canonical_json;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Write {
    #[serde(rename = "k")]
    pub key: String,
    /// `None` deletes the key.
    #[serde(rename = "v")]
    pub value: Option<Value>,
}

impl Write {
    pub fn put(key: impl Into<String>, value: Value) -> Self {
        Write {
            key: key.into(),
            value: Some(value),
        }
    }

    pub fn delete(key: impl Into<String>) -> Self {
        Write {
            key: key.into(),
            value: None,
        }
    }
}

pub trait StoragePort: Send + Sync {
    /// Every committed key with its latest value, in key order.
    fn load(&self) -> Result<BTreeMap<String, Value>>;
    /// Durably apply a batch; all writes land or none do.
    fn commit(&self, batch: &[Write]) -> Result<()>;
}

#[derive(Default)]
pub struct MemoryStorage {
    data: Mutex<BTreeMap<String, Value>>,
}

impl MemoryStorage {
    pub fn new() -> Self {
        Self::default()
    }
}

impl StoragePort for MemoryStorage {
    fn load(&self) -> Result<BTreeMap<String, Value>> {
        Ok(self.data.lock().expect("storage lock").clone())
    }

    fn commit(&self, batch: &[Write]) -> Result<()> {
        let mut data = self.data.lock().expect("storage lock");
        apply(&mut data, batch);
        Ok(())
    }
}

fn apply(data: &mut BTreeMap<String, Value>, batch: &[Write]) {
    for w in batch {
        match &w.value {
            Some(v) => {
                data.insert(w.key.clone(), v.clone());
            }
            None => {
                data.remove(&w.key);
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
struct LogLine {
    writes: Vec<Write>,
    sum: String,
}

fn batch_digest(writes: &[Write]) -> String {
    let value = serde_json::to_value(writes).expect("writes serialize");
    Checksum::of(canonical_json(&value).as_bytes()).hex()
}

struct LogFile {
    file: File,
    torn_after: Option<usize>,
}

pub struct FileStorage {
    dir: PathBuf,
    log: Mutex<LogFile>,
    durable: bool,
    _lock: File,
}

const LOG_NAME: &str = "registry.log";
const LOCK_NAME: &str = "LOCK";

impl FileStorage {
    /// Opens (creating if needed) the log under `dir` and takes an exclusive
    /// lock so two processes never append to the same log.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir).map_err(|e| Error::storage(format!("{}: {e}", dir.display())))?;
        let lock = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(dir.join(LOCK_NAME))
            .map_err(|e| Error::storage(format!("{}: {e}", dir.display())))?;
        match lock.try_lock() {
            Ok(()) => {}
            Err(TryLockError::WouldBlock) => {
                return Err(Error::storage(format!("{} is locked by another process", dir.display())))
            }
            Err(TryLockError::Error(e)) => return Err(Error::storage(e)),
        }
        let file = OpenOptions::new()
            .create(true)
            .read(true)
            .append(true)
            .open(dir.join(LOG_NAME))
            .map_err(Error::storage)?;
        Ok(FileStorage {
            dir,
            log: Mutex::new(LogFile { file, torn_after: None }),
            durable: true,
            _lock: lock,
        })
    }

    /// Skip fsync after each batch. Crash safety then depends on the OS.
    pub fn without_fsync(mut self) -> Self {
        self.durable = false;
        self
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Test hook: the next commit writes only its first `bytes` bytes and
    /// then fails, as if the process died mid-write.
    pub fn inject_torn_write(&self, bytes: usize) {
        self.log.lock().expect("log lock").torn_after = Some(bytes);
    }
}

impl StoragePort for FileStorage {
    fn load(&self) -> Result<BTreeMap<String, Value>> {
        let mut log = self.log.lock().expect("log lock");
        log.file.seek(SeekFrom::Start(0)).map_err(Error::storage)?;
        let mut reader = BufReader::new(&log.file);
        let mut data = BTreeMap::new();
        let mut good_len: u64 = 0;
        let mut line = Vec::new();
        loop {
            line.clear();
            let n = reader.read_until(b'\n', &mut line).map_err(Error::storage)?;
            if n == 0 {
                break;
            }
            if line.last() != Some(&b'\n') {
                break;
            }
            let Ok(parsed) = serde_json::from_slice::<LogLine>(&line[..n - 1]) else {
                break;
            };
            if batch_digest(&parsed.writes) != parsed.sum {
                break;
            }
            apply(&mut data, &parsed.writes);
            good_len += n as u64;
        }
        drop(reader);
        let total = log.file.metadata().map_err(Error::storage)?.len();
        if total > good_len {
            tracing::warn!(discarded = total - good_len, "discarding torn tail of registry log");
            log.file.set_len(good_len).map_err(Error::storage)?;
        }
        Ok(data)
    }

    fn commit(&self, batch: &[Write]) -> Result<()> {
        let line = LogLine {
            writes: batch.to_vec(),
            sum: batch_digest(batch),
        };
        let mut bytes = serde_json::to_vec(&line).map_err(Error::storage)?;
        bytes.push(b'\n');
        let mut log = self.log.lock().expect("log lock");
        if let Some(n) = log.torn_after.take() {
            let cut = n.min(bytes.len().saturating_sub(1));
            log.file.write_all(&bytes[..cut]).map_err(Error::storage)?;
            return Err(Error::storage("injected torn write"));
        }
        log.file.write_all(&bytes).map_err(Error::storage)?;
        if self.durable {
            log.file.sync_data().map_err(Error::storage)?;
        }
        Ok(())
    }
}

/// Content-addressed artifact storage.
pub trait BlobStore: Send + Sync {
    fn put(&self, bytes: &[u8]) -> Result<Checksum>;
    /// Record that `checksum` is served from an external location instead of
    /// being copied in.
    fn put_reference(&self, checksum: Checksum, location: &str) -> Result<()>;
    fn get(&self, checksum: &Checksum) -> Result<Option<Vec<u8>>>;
    fn contains(&self, checksum: &Checksum) -> bool;
}

#[derive(Default)]
pub struct MemoryBlobStore {
    blobs: Mutex<HashMap<Checksum, Vec<u8>>>,
    refs: Mutex<HashMap<Checksum, String>>,
}

impl MemoryBlobStore {
    pub fn new() -> Self {
        Self::default()
    }
}

impl BlobStore for MemoryBlobStore {
    fn put(&self, bytes: &[u8]) -> Result<Checksum> {
        let sum = Checksum::of(bytes);
        self.blobs.lock().expect("blob lock").insert(sum, bytes.to_vec());
        Ok(sum)
    }

    fn put_reference(&self, checksum: Checksum, location: &str) -> Result<()> {
        self.refs.lock().expect("blob lock").insert(checksum, location.to_string());
        Ok(())
    }

    fn get(&self, checksum: &Checksum) -> Result<Option<Vec<u8>>> {
        if let Some(b) = self.blobs.lock().expect("blob lock").get(checksum) {
            return Ok(Some(b.clone()));
        }
        match self.refs.lock().expect("blob lock").get(checksum) {
            Some(loc) => read_reference(loc),
            None => Ok(None),
        }
    }

    fn contains(&self, checksum: &Checksum) -> bool {
        self.blobs.lock().expect("blob lock").contains_key(checksum)
            || self.refs.lock().expect("blob lock").contains_key(checksum)
    }
}

fn read_reference(location: &str) -> Result<Option<Vec<u8>>> {
    match fs::read(location) {
        Ok(b) => Ok(Some(b)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(Error::storage(e)),
    }
}

pub struct FsBlobStore {
    root: PathBuf,
}

impl FsBlobStore {
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(&root).map_err(|e| Error::storage(format!("{}: {e}", root.display())))?;
        Ok(FsBlobStore { root })
    }

    fn path(&self, sum: &Checksum) -> PathBuf {
        self.root.join(sum.hex())
    }

    fn ref_path(&self, sum: &Checksum) -> PathBuf {
        self.root.join(format!("{}.ref", sum.hex()))
    }

    fn write_atomic(&self, target: &Path, bytes: &[u8]) -> Result<()> {
        let mut tmp = tempfile::NamedTempFile::new_in(&self.root).map_err(Error::storage)?;
        tmp.write_all(bytes).map_err(Error::storage)?;
        tmp.as_file().sync_data().map_err(Error::storage)?;
        tmp.persist(target).map_err(Error::storage)?;
        Ok(())
    }
}

impl BlobStore for FsBlobStore {
    fn put(&self, bytes: &[u8]) -> Result<Checksum> {
        let sum = Checksum::of(bytes);
        let target = self.path(&sum);
        if !target.exists() {
            self.write_atomic(&target, bytes)?;
        }
        Ok(sum)
    }

    fn put_reference(&self, checksum: Checksum, location: &str) -> Result<()> {
        self.write_atomic(&self.ref_path(&checksum), location.as_bytes())
    }

    fn get(&self, checksum: &Checksum) -> Result<Option<Vec<u8>>> {
        match fs::read(self.path(checksum)) {
            Ok(b) => return Ok(Some(b)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(Error::storage(e)),
        }
        match fs::read_to_string(self.ref_path(checksum)) {
            Ok(loc) => read_reference(loc.trim()),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(Error::storage(e)),
        }
    }

    fn contains(&self, checksum: &Checksum) -> bool {
        self.path(checksum).exists() || self.ref_path(checksum).exists()
    }
}
