//! Directory and zip packaging.

use std::collections::BTreeMap;
use std::io::{Cursor, Read, Write as _};
use std::path::Path;

use zip::write::SimpleFileOptions;

use super::{Attachment, WorkflowCrate, METADATA_FILE};
use crate::checksum::Checksum;
use crate::error::{Error, Result};
use crate::source::is_safe_relative_path;

#[derive(Clone, Copy, Debug)]
pub struct ZipLimits {
    pub max_entries: usize,
    pub max_total_bytes: u64,
}

impl Default for ZipLimits {
    fn default() -> Self {
        ZipLimits {
            max_entries: 10_000,
            max_total_bytes: 1 << 30,
        }
    }
}

fn packaging(context: impl std::fmt::Display, e: impl std::fmt::Display) -> Error {
    Error::Packaging(format!("{context}: {e}"))
}

/// Read a crate directory. Files larger than `reference_threshold` are
/// attached by reference to their on-disk location.
pub fn read_dir(dir: impl AsRef<Path>, reference_threshold: u64) -> Result<WorkflowCrate> {
    let dir = dir.as_ref();
    let meta = std::fs::read(dir.join(METADATA_FILE)).map_err(|e| packaging(dir.join(METADATA_FILE).display(), e))?;
    let mut krate = WorkflowCrate::from_metadata(&meta)?;
    for entry in walkdir::WalkDir::new(dir).follow_links(false).sort_by_file_name() {
        let entry = entry.map_err(|e| packaging(dir.display(), e))?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry
            .path()
            .strip_prefix(dir)
            .expect("walk stays under root")
            .components()
            .map(|c| c.as_os_str().to_string_lossy().into_owned())
            .collect::<Vec<_>>()
            .join("/");
        if rel == METADATA_FILE {
            continue;
        }
        let size = entry.metadata().map_err(|e| packaging(&rel, e))?.len();
        let attachment = if size > reference_threshold {
            let location = std::fs::canonicalize(entry.path()).map_err(|e| packaging(&rel, e))?;
            let mut file = std::fs::File::open(&location).map_err(|e| packaging(&rel, e))?;
            Attachment::Reference {
                checksum: checksum_reader(&mut file).map_err(|e| packaging(&rel, e))?,
                location: location.to_string_lossy().into_owned(),
                size,
            }
        } else {
            Attachment::inline(std::fs::read(entry.path()).map_err(|e| packaging(&rel, e))?)
        };
        krate.attachments.insert(rel, attachment);
    }
    Ok(krate)
}

fn checksum_reader(r: &mut impl Read) -> std::io::Result<Checksum> {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    std::io::copy(r, &mut hasher)?;
    let digest: [u8; 32] = hasher.finalize().into();
    Ok(Checksum::from_hex(&hex::encode(digest)).expect("sha-256 hex"))
}

pub fn write_dir(krate: &WorkflowCrate, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| packaging(dir.display(), e))?;
    std::fs::write(dir.join(METADATA_FILE), krate.metadata_json()).map_err(|e| packaging(METADATA_FILE, e))?;
    for (path, attachment) in &krate.attachments {
        if !is_safe_relative_path(path) {
            return Err(Error::Packaging(format!("{path:?} escapes the package")));
        }
        let target = dir.join(path);
        if let Some(parent) = target.parent() {
            std::fs::create_dir_all(parent).map_err(|e| packaging(path, e))?;
        }
        match attachment {
            Attachment::Inline(bytes) => std::fs::write(&target, bytes).map_err(|e| packaging(path, e))?,
            Attachment::Reference { location, .. } => {
                std::fs::copy(location, &target).map_err(|e| packaging(path, e))?;
            }
        }
    }
    Ok(())
}

/// Decode a zipped crate held in memory. The metadata file must sit at the
/// archive root; entry names that escape the package are refused.
pub fn read_zip(bytes: &[u8], limits: ZipLimits) -> Result<WorkflowCrate> {
    let mut archive = zip::ZipArchive::new(Cursor::new(bytes)).map_err(|e| packaging("zip", e))?;
    if archive.len() > limits.max_entries {
        return Err(Error::Packaging(format!("zip has {} entries, limit {}", archive.len(), limits.max_entries)));
    }
    let mut budget = limits.max_total_bytes;
    let mut metadata = None;
    let mut files = BTreeMap::new();
    for i in 0..archive.len() {
        let mut entry = archive.by_index(i).map_err(|e| packaging("zip", e))?;
        if entry.is_dir() {
            continue;
        }
        let name = entry.name().to_string();
        if !is_safe_relative_path(&name) {
            return Err(Error::Packaging(format!("zip entry {name:?} escapes the package")));
        }
        let mut buf = Vec::new();
        let read = entry
            .by_ref()
            .take(budget + 1)
            .read_to_end(&mut buf)
            .map_err(|e| packaging(&name, e))? as u64;
        if read > budget {
            return Err(Error::Packaging(format!(
                "zip expands beyond {} bytes",
                limits.max_total_bytes
            )));
        }
        budget -= read;
        if name == METADATA_FILE {
            metadata = Some(buf);
        } else if files.insert(name.clone(), Attachment::inline(buf)).is_some() {
            return Err(Error::Packaging(format!("zip entry {name:?} appears twice")));
        }
    }
    let metadata = metadata.ok_or_else(|| Error::Packaging(format!("zip has no {METADATA_FILE} at its root")))?;
    let mut krate = WorkflowCrate::from_metadata(&metadata)?;
    krate.attachments = files;
    Ok(krate)
}

pub fn write_zip(krate: &WorkflowCrate) -> Result<Vec<u8>> {
    let mut out = zip::ZipWriter::new(Cursor::new(Vec::new()));
    let opts = SimpleFileOptions::default().compression_method(zip::CompressionMethod::Deflated);
    let zerr = |e: zip::result::ZipError| packaging("zip", e);
    out.start_file(METADATA_FILE, opts).map_err(zerr)?;
    out.write_all(&krate.metadata_json()).map_err(|e| packaging(METADATA_FILE, e))?;
    for (path, attachment) in &krate.attachments {
        if !is_safe_relative_path(path) {
            return Err(Error::Packaging(format!("{path:?} escapes the package")));
        }
        out.start_file(path.as_str(), opts).map_err(zerr)?;
        out.write_all(&attachment.read()?).map_err(|e| packaging(path, e))?;
    }
    Ok(out.finish().map_err(zerr)?.into_inner())
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::minimal;
    use super::*;

    #[test]
    fn zip_round_trip() {
        let c = minimal("zipped");
        let bytes = write_zip(&c).unwrap();
        let back = read_zip(&bytes, ZipLimits::default()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn zip_limits_are_enforced() {
        let mut c = minimal("big");
        c.attachments.insert("data.bin".into(), Attachment::inline(vec![0u8; 4096]));
        let bytes = write_zip(&c).unwrap();
        let tight = ZipLimits {
            max_entries: 10,
            max_total_bytes: 1024,
        };
        assert!(matches!(read_zip(&bytes, tight), Err(Error::Packaging(_))));
        assert!(read_zip(b"not a zip", ZipLimits::default()).is_err());
    }

    #[test]
    fn zip_without_metadata_is_refused() {
        let mut w = zip::ZipWriter::new(Cursor::new(Vec::new()));
        w.start_file("main.cwl", SimpleFileOptions::default()).unwrap();
        w.write_all(b"x").unwrap();
        let bytes = w.finish().unwrap().into_inner();
        assert!(read_zip(&bytes, ZipLimits::default()).is_err());
    }

    #[test]
    fn directory_round_trip_with_references() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = minimal("on-disk");
        c.attachments.insert("data/big.bin".into(), Attachment::inline(vec![7u8; 300]));
        write_dir(&c, dir.path()).unwrap();

        let back = read_dir(dir.path(), u64::MAX).unwrap();
        assert_eq!(back, c);

        let by_ref = read_dir(dir.path(), 200).unwrap();
        match &by_ref.attachments["data/big.bin"] {
            Attachment::Reference { checksum, size, .. } => {
                assert_eq!(*size, 300);
                assert_eq!(*checksum, Checksum::of(&[7u8; 300]));
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(by_ref.attachments["data/big.bin"].read().unwrap(), vec![7u8; 300]);
    }
}
