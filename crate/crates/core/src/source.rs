use std::fmt;

use serde::{Deserialize, Serialize};

use crate::checksum::Checksum;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceScheme {
    Git,
    Oci,
    Https,
    File,
    Doi,
}

impl SourceScheme {
    pub fn as_str(self) -> &'static str {
        match self {
            SourceScheme::Git => "git",
            SourceScheme::Oci => "oci",
            SourceScheme::Https => "https",
            SourceScheme::File => "file",
            SourceScheme::Doi => "doi",
        }
    }

    pub fn parse(raw: &str) -> Option<Self> {
        match raw {
            "git" => Some(SourceScheme::Git),
            "oci" => Some(SourceScheme::Oci),
            "https" => Some(SourceScheme::Https),
            "file" => Some(SourceScheme::File),
            "doi" => Some(SourceScheme::Doi),
            _ => None,
        }
    }
}

impl fmt::Display for SourceScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Where a component's artifact lives.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceDescriptor {
    pub scheme: SourceScheme,
    pub locator: String,
    #[serde(default, rename = "ref", skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checksum: Option<Checksum>,
}

impl SourceDescriptor {
    pub fn new(scheme: SourceScheme, locator: impl Into<String>) -> Self {
        SourceDescriptor {
            scheme,
            locator: locator.into(),
            reference: None,
            checksum: None,
        }
    }

    pub fn with_ref(mut self, reference: impl Into<String>) -> Self {
        self.reference = Some(reference.into());
        self
    }

    pub fn with_checksum(mut self, checksum: Checksum) -> Self {
        self.checksum = Some(checksum);
        self
    }

    /// Structural checks that do not need registry state. File sources are
    /// additionally checked against the blob store at registration.
    pub fn check(&self) -> Result<(), String> {
        if self.locator.trim().is_empty() {
            return Err("locator must not be empty".into());
        }
        match self.scheme {
            SourceScheme::Oci => match self.reference.as_deref() {
                Some(r) if is_oci_ref(r) => {}
                _ => return Err("oci sources need a tag or digest ref".into()),
            },
            SourceScheme::File => {
                if !is_safe_relative_path(&self.locator) {
                    return Err(format!(
                        "file locator {:?} must be a relative path inside the crate",
                        self.locator
                    ));
                }
                if self.checksum.is_none() {
                    return Err("file sources must carry a checksum".into());
                }
            }
            _ => {}
        }
        if let Some(r) = &self.reference {
            if r.trim().is_empty() {
                return Err("ref must not be empty when present".into());
            }
        }
        Ok(())
    }
}

fn is_oci_ref(r: &str) -> bool {
    if let Some(hex) = r.strip_prefix("sha256:") {
        return hex.len() == 64 && hex.bytes().all(|b| b.is_ascii_hexdigit());
    }
    // OCI tag grammar: [A-Za-z0-9_][A-Za-z0-9._-]{0,127}
    let bytes = r.as_bytes();
    !bytes.is_empty()
        && bytes.len() <= 128
        && (bytes[0].is_ascii_alphanumeric() || bytes[0] == b'_')
        && bytes
            .iter()
            .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'.' | b'_' | b'-'))
}

/// Relative, `/`-separated, no `..`, no empty or absolute components.
pub fn is_safe_relative_path(path: &str) -> bool {
    !path.is_empty()
        && !path.starts_with('/')
        && !path.contains('\\')
        && !path.contains('\0')
        && !path.contains("://")
        && path
            .split('/')
            .all(|c| !c.is_empty() && c != "." && c != "..")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oci_needs_tag_or_digest() {
        let s = SourceDescriptor::new(SourceScheme::Oci, "registry.example/align");
        assert!(s.check().is_err());
        assert!(s.clone().with_ref("v1.2").check().is_ok());
        assert!(s
            .clone()
            .with_ref(format!("sha256:{}", "a".repeat(64)))
            .check()
            .is_ok());
        assert!(s.with_ref("sha256:zz").check().is_err());
    }

    #[test]
    fn empty_locator_rejected() {
        assert!(SourceDescriptor::new(SourceScheme::Git, " ").check().is_err());
    }

    #[test]
    fn file_paths_are_contained() {
        for bad in ["../etc/passwd", "/abs", "a//b", "a/./b", "", "c:\\x", "https://x"] {
            assert!(!is_safe_relative_path(bad), "{bad}");
        }
        assert!(is_safe_relative_path("workflows/main.cwl"));
        let no_sum = SourceDescriptor::new(SourceScheme::File, "main.cwl");
        assert!(no_sum.check().is_err());
    }

    #[test]
    fn serde_uses_ref_key() {
        let s = SourceDescriptor::new(SourceScheme::Git, "https://git.example/x.git").with_ref("v1");
        let v = serde_json::to_value(&s).unwrap();
        assert_eq!(v["ref"], "v1");
        assert_eq!(v["scheme"], "git");
    }
}
